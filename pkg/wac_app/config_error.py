from .wac_error import WacError


class ConfigError(WacError):
    """Experiment configuration, sweep spec or layout file is invalid."""
    pass
