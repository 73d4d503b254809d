"""
Logging configuration for kernelvis.

Console output always goes to stdout. Set KERNELVIS_LOG_FILE to also keep a copy of every
record on disk.
"""

import logging
import os
import sys
from pathlib import Path

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logger(
    name: str = "kernelvis",
    level: int | str | None = None,
    log_file: str | Path | None = None,
) -> logging.Logger:
    """Set up and configure a logger.

    Args:
        name: Name of the logger
        level: Logging level (default: KERNELVIS_LOG_LEVEL or INFO)
        log_file: Optional file that receives the same records (default: KERNELVIS_LOG_FILE)

    Returns:
        Configured logger instance
    """
    if level is None:
        level = os.getenv("KERNELVIS_LOG_LEVEL", "INFO").upper()
    if log_file is None:
        log_file = os.getenv("KERNELVIS_LOG_FILE") or None

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Remove existing handlers to avoid duplicates
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    # Prevent propagation to root logger
    logger.propagate = False

    return logger


logger = setup_logger()
