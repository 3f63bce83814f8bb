"""
Logging configuration for lowrank-varx-id.

Every service, the tool handler and the CLI log through named loggers
built here, so experiment progress and solver warnings land on stderr
while stdout stays reserved for results. Worker processes of the
experiment pool rebuild the same loggers when they import the services.
"""

from __future__ import annotations

import logging
import sys
from typing import TextIO

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_registered: dict[str, logging.Logger] = {}


def setup_logger(
    name: str,
    level: int = logging.INFO,
    stream: TextIO = sys.stderr,
) -> logging.Logger:
    """Return the stderr logger for a module, creating it on first use.

    Repeated calls with the same name return the registered logger
    unchanged, whatever ``level`` and ``stream`` they pass.

    Args:
        name: Logger name (typically __name__)
        level: Initial level (default: INFO)
        stream: Output stream (default: stderr)

    Example:
        >>> logger = setup_logger("services.experiment_service")
        >>> logger.info("phase_transition N=240: success_rate=0.97")
    """
    if name in _registered:
        return _registered[name]

    logger = logging.getLogger(name)
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler(stream)
        handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(handler)
    # Results own stdout; nothing may leak through the root logger
    logger.propagate = False

    _registered[name] = logger
    return logger


def set_package_level(level: int) -> None:
    """Set the level of every logger built by setup_logger.

    The CLI calls this for ``--verbose`` after the services have created
    their loggers at import time, so solver iterations and per-cell
    progress show up at DEBUG.
    """
    for logger in _registered.values():
        logger.setLevel(level)
