import logging

__all__ = ['log', 'configure']

FORMAT = '%(asctime)-15s %(name)s (%(levelname)s) > %(message)s'

log = logging.getLogger('wac')


def configure(debug: bool = False) -> None:
    """Install the package log format once, WARNING unless debugging."""
    logging.basicConfig(format=FORMAT)
    log.setLevel(logging.DEBUG if debug else logging.WARNING)
