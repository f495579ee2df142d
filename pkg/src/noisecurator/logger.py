"""Centralized logging configuration for the command line and library use."""

import logging
import os
import sys
from typing import Optional

LOG_FORMAT = "[%(levelname)s] %(asctime)s %(name)s: %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _level_from_env() -> int:
    name = os.environ.get("NOISECURATOR_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def setup_root_logger() -> None:
    """Setup root logger writing to stderr, leaving stdout for command output."""
    root_logger = logging.getLogger()

    # Clear any existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    logging.basicConfig(
        level=_level_from_env(),
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        stream=sys.stderr,
    )

    root_logger.setLevel(_level_from_env())


# Setup root logger when module is imported
setup_root_logger()


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a logger for a package module.

    Args:
        name: Logger name. If None, returns root logger.

    Returns:
        Logger that propagates to the root handler configured above
    """
    return logging.getLogger(name) if name else logging.getLogger()


def set_verbosity(verbose: bool) -> None:
    """Switch the package loggers to DEBUG (or back to the environment level)."""
    logging.getLogger().setLevel(logging.DEBUG if verbose else _level_from_env())
