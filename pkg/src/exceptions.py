"""
Error types raised across the UWF enhancement toolkit.
"""

from typing import Optional


class UwfEnhanceError(Exception):
    """Base class for all toolkit errors."""


class ImageIOError(UwfEnhanceError):
    """An image file could not be read or written."""

    def __init__(self, path, message: str = "unreadable image"):
        self.path = str(path)
        super().__init__(f"{message}: {self.path}")


class ImageFormatError(UwfEnhanceError):
    """Unsupported bit depth, dtype or file format."""


class ShapeError(UwfEnhanceError):
    """Tensor dimensions violate an operation's shape precondition."""


class ConfigError(UwfEnhanceError):
    """Invalid configuration value or unknown configuration key."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message)


class ContractViolation(UwfEnhanceError):
    """Input values outside the range an operation requires."""


class NumericError(UwfEnhanceError):
    """NaN or Inf encountered in parameters, activations or losses."""


class CheckpointFormatError(UwfEnhanceError):
    """Checkpoint magic string, version or config does not match."""


class TrainingAborted(NumericError):
    """Training stopped early; a diagnostic snapshot was written."""

    def __init__(self, message: str, snapshot_path: Optional[str] = None):
        self.snapshot_path = snapshot_path
        if snapshot_path:
            message = f"{message} (snapshot: {snapshot_path})"
        super().__init__(message)
