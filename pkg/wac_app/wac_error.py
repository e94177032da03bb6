class WacError(Exception):
    """Base for every error the engine raises on purpose."""
    pass
