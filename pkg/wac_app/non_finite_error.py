from .wac_error import WacError


class NonFiniteError(WacError):
    """A tensor, gradient or loss went NaN or infinite; the run is aborted."""
    pass
