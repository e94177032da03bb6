from .wac_error import WacError


class ShapeMismatchError(WacError):
    """Tensor shapes do not fit the layer or network they are fed to."""
    pass
