"""Logging configuration for ctdr."""

import logging
import sys

PACKAGE_LOGGER = "ctdr"


class VerboseFormatter(logging.Formatter):
    """Timestamp, level and module logger name for --verbose runs."""

    def __init__(self) -> None:
        super().__init__(
            "[%(asctime)s] %(levelname)s %(name)s: %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
        )


def setup_logging(verbose: bool = False) -> logging.Logger:
    """
    Attach a single stderr handler to the ``ctdr`` logger.

    Library modules log through its children. Repeated calls replace the
    handler, so the group and the study commands may both call this.

    Args:
        verbose: DEBUG level with timestamps instead of INFO with bare messages

    Returns:
        The ``ctdr`` logger
    """
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(VerboseFormatter() if verbose else logging.Formatter("%(message)s"))

    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.handlers = [handler]
    logger.propagate = False
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return logger
