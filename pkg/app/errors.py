"""
Error Types

All failures raised by the toolkit derive from SciError so the command line and
the API can map them to a single-line diagnostic or an HTTP 400.
"""
from typing import Any, Optional


class SciError(Exception):
    """Base class for toolkit errors."""


class ShapeError(SciError, ValueError):
    """Extent or dimension mismatch."""


class ConfigError(SciError, ValueError):
    """Invalid configuration value or key."""


class FormatError(SciError, ValueError):
    """Corrupt or truncated tensor container."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnregisteredOpError(SciError, KeyError):
    """Lookup of an op that has no registered backward."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unregistered op"


class DecompositionError(SciError, ValueError):
    """Measurement decomposition requested where it is not defined."""


class NonFiniteError(SciError, FloatingPointError):
    """An op produced NaN or Inf."""


class TrainingDivergedError(SciError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, message: str, checkpoint: Optional[Any] = None):
        super().__init__(message)
        self.checkpoint = checkpoint
