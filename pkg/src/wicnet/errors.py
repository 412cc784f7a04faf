"""Exception types shared across the package."""


class WicnetError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(WicnetError):
    """Shapes or channel counts do not match an operation's contract."""


class WellPosednessError(WicnetError):
    """A kernel's Gram matrix is singular (or a config would make it so).

    Carries the offending log|det| value when available.
    """

    def __init__(self, message, log_abs_det=None):
        super().__init__(message)
        self.log_abs_det = log_abs_det


class DegenerateShiftError(WicnetError):
    """A shift offset would move the entire plane into padding."""


class ConfigError(WicnetError):
    """A run configuration failed validation; names the offending key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NonFiniteLossError(WicnetError):
    """Training produced a NaN/Inf loss; names the offending component."""

    def __init__(self, message, component=None, step=None):
        super().__init__(message)
        self.component = component
        self.step = step


class UsageError(WicnetError):
    """An operation was invoked outside its contract."""


class FormatError(WicnetError):
    """A binary fixture or checkpoint file is malformed or mismatched."""
