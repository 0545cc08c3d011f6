"""Exception types shared across the package."""


class DivaError(Exception):
    """Base class for package errors."""


class UsageError(DivaError):
    """Bad command-line invocation."""


class DataError(DivaError):
    """Malformed input data, invalid configuration, or failed validation."""


class ShapeError(DataError):
    """Tensor operands with incompatible shapes."""


class NumericError(DivaError):
    """Non-finite values or a non-deterministic computation."""
