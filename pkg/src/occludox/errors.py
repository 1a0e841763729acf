"""Exception hierarchy shared across the package.

CLI exit codes: ConfigError -> 2, DataError/FormatError -> 3, NumericError -> 4.
"""


class OccludoxError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(OccludoxError, ValueError):
    """Tensor/image dimensions incompatible with the requested operation."""


class ContractError(OccludoxError, ValueError):
    """A documented precondition was violated (empty mask, missing gradient, ...)."""


class ConfigError(OccludoxError, ValueError):
    """Invalid configuration value; message carries the JSON path when parsed from file."""


class DataError(OccludoxError, IOError):
    """I/O level failure; message names the offending file."""


class FormatError(OccludoxError, ValueError):
    """Malformed on-disk format. ``offset`` is the byte offset of the problem when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BoundsError(OccludoxError, IndexError):
    """A placement or index lies outside the image."""


class NumericError(OccludoxError, ArithmeticError):
    """NaN/Inf detected where the numeric contract requires finite values."""
