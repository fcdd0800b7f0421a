"""Exception types shared across the package."""


class MogSwitchError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(MogSwitchError, ValueError):
    """A distribution parameter violates its invariants (e.g. variance <= 0)."""


class CapExceededError(MogSwitchError, RuntimeError):
    """An exact enumeration would exceed the configured size or term budget."""


class CalibrationFailedError(MogSwitchError, RuntimeError):
    """A calibration grid search found no point within tolerance."""
