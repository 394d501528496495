"""Exception types raised across the package."""


class AxBxPError(Exception):
    """Base class for all errors raised by axbxp."""


class RangeError(AxBxPError, ValueError):
    """A value does not fit the 8-bit sign-magnitude range."""


class ConfigurationError(AxBxPError, ValueError):
    """Block width, block count or selection sizes are inconsistent."""


class BlockIndexError(AxBxPError, IndexError):
    """A block selection refers to a block that does not exist."""


class FormatError(AxBxPError, ValueError):
    """A serialized stream or checkpoint is malformed."""


class InputError(AxBxPError, ValueError):
    """Non-finite or badly shaped input data."""


class TrainingError(AxBxPError, RuntimeError):
    """Training diverged."""
