"""
cdeh/core/logging.py
Loguru sink setup shared by the CLI and long-running services
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level> | {extra}"
)


def configure_logging(level: str = "INFO", log_file: Optional[Path] = None) -> None:
    """Replace loguru's default sink with a stderr sink (and an optional file sink)"""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=_FORMAT, backtrace=False)
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        # file sink is machine-readable
        logger.add(log_file, level="DEBUG", serialize=True, enqueue=True)
