import logging
import os

logger = logging.getLogger("qfluct")


def log_debug(message: str) -> None:
    """Send a debug line to the qfluct logger and, if configured, to QFLUCT_DEBUG_LOG."""
    logger.debug(message)
    path = os.environ.get("QFLUCT_DEBUG_LOG")
    if path:
        with open(path, "a") as f:
            f.write(f"{message}\n")


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    logger.setLevel(level)
