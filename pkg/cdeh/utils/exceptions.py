"""
cdeh/utils/exceptions.py
Centralized custom exceptions for the simulator, the learners and the CLI
Every error carries a machine code and a detail; the CLI maps them to exit codes
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from loguru import logger


# =============================================================================
# CUSTOM APPLICATION EXCEPTIONS
# =============================================================================

class CdehException(Exception):
    """Base class for all custom exceptions"""

    def __init__(self, code: str, detail: str, exit_code: int = 1):
        self.code = code
        self.detail = detail
        self.exit_code = exit_code
        super().__init__(f"{code}: {detail}")


class StructuralError(CdehException, ValueError):
    """Shapes, permutations or graphs that do not fit together"""

    def __init__(self, detail: str = "Structural mismatch"):
        super().__init__("STRUCTURAL", detail, exit_code=3)


class DomainError(CdehException, ValueError):
    """Numeric input outside the domain of an operation"""

    def __init__(self, detail: str = "Value outside domain"):
        super().__init__("DOMAIN", detail, exit_code=3)


class CapabilityError(CdehException):
    """Request exceeds what the implementation supports (e.g. N! enumeration)"""

    def __init__(self, detail: str = "Capability exceeded"):
        super().__init__("CAPABILITY", detail, exit_code=4)


class ConfigError(CdehException):
    """Invalid configuration, optionally pinned to a file line"""

    def __init__(
        self,
        detail: str = "Invalid configuration",
        path: Optional[Path] = None,
        line: Optional[int] = None,
    ):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            detail = f"{path}:{line}: {detail}"
        elif path is not None:
            detail = f"{path}: {detail}"
        super().__init__("CONFIG", detail, exit_code=2)


class NonFiniteLossError(CdehException):
    """Training produced NaN/inf; a diagnostic checkpoint has been written"""

    def __init__(self, detail: str = "Non-finite loss", checkpoint: Optional[Path] = None):
        self.checkpoint = checkpoint
        if checkpoint is not None:
            detail = f"{detail} (diagnostic checkpoint: {checkpoint})"
        super().__init__("NON_FINITE", detail, exit_code=5)


# =============================================================================
# GLOBAL EXCEPTION HANDLER (CLI boundary)
# =============================================================================

def handle_exception(exc: BaseException) -> int:
    """Log an exception once and return the process exit status"""
    if isinstance(exc, CdehException):
        logger.error(f"{exc.code} - {exc.detail}")
        return exc.exit_code
    if isinstance(exc, KeyboardInterrupt):
        logger.warning("Interrupted; rerun with the same --out to resume")
        return 130
    logger.opt(exception=exc).error(f"Unhandled exception: {exc}")
    return 1
