"""Exceptions and warnings raised by the library."""
from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the domain where an operation is defined."""


class ConvergenceError(RuntimeError):
    """An iterative solution did not converge within its iteration cap."""


class FilterError(RuntimeError):
    """The Kalman filter hit a numerical failure (e.g. singular innovation)."""


class ScenarioError(ValueError):
    """Invalid scenario configuration.

    Parameters
    ----------
    field : str
        Dotted path of the offending field, e.g. ``"sensor.gyro_bias_deg_h"``.
    message : str
        Human readable reason.
    """

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class LogFormatError(ValueError):
    """A replay log does not match its schema or has invalid timestamps."""


class AmbiguousRotationWarning(RuntimeWarning):
    """Rotation angle is within 1e-6 rad of pi; the log axis sign is a convention."""


class GimbalLockWarning(RuntimeWarning):
    """Euler pitch magnitude exceeds 89 degrees; roll and yaw are poorly defined."""
