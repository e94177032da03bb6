from .wac_error import WacError


class EnvironmentFaultError(WacError):
    """Environment was driven outside its contract (e.g. start inside a wall)."""
    pass
