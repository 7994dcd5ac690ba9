import logging

from rich.console import Console
from rich.logging import RichHandler

_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def configure_logging(level: str = "warn") -> None:
    """Install a single stderr handler on the ``pb2`` logger."""
    logger = logging.getLogger("pb2")
    logger.setLevel(_LEVELS[level])
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
