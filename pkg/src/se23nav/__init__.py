"""Inertial navigation on SE_2(3) with transformed ECEF mechanization.

Modules
-------
liegroup
    SO(3) and SE_2(3) exponential/logarithm maps and Jacobians.
earth
    WGS-84 gravity and frame conversions.
mechanization
    Classic and transformed ECEF strapdown propagation.
error_models
    Error definitions, F/G transition blocks and measurement Jacobians.
filter
    Error-state Kalman filter with right, left and SO(3) error definitions.
simulator
    Truth trajectories and sensor synthesis.
harness
    Scenario files, Monte Carlo runs, log replay and the command line.
"""
from ._jit import NUMBA_ENABLED
from .earth import WGS84, EarthModel, Geodetic
from .errors import (
    AmbiguousRotationWarning,
    ConvergenceError,
    DomainError,
    FilterError,
    GimbalLockWarning,
    LogFormatError,
    ScenarioError,
)
from .liegroup import ExtendedPose, Twist
from .mechanization import ImuSample, NavState, TransformedNavState

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED",
    "WGS84",
    "EarthModel",
    "Geodetic",
    "AmbiguousRotationWarning",
    "ConvergenceError",
    "DomainError",
    "FilterError",
    "GimbalLockWarning",
    "LogFormatError",
    "ScenarioError",
    "ExtendedPose",
    "Twist",
    "ImuSample",
    "NavState",
    "TransformedNavState",
]
