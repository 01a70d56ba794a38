"""WGS-84 Earth model: normal gravity, gravitation and frame conversions.

Gravity ``g`` is the plumb-line vector (gravitation plus centrifugal). The
mechanization works with gravitation ``gbar = g + (w x)^2 p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from .errors import ConvergenceError, DomainError

MIN_RADIUS = 6.2e6
GEODETIC_TOL = 1e-12
GEODETIC_MAX_ITER = 20

# parameter vector layout used by the kernels
_A, _F, _W, _GE, _GP, _GM = range(6)


@dataclass(frozen=True)
class EarthModel:
    """Reference ellipsoid and normal-gravity constants (WGS-84 defaults)."""

    omega_ie: float = 7.292115e-5
    semi_major_axis: float = 6378137.0
    flattening: float = 1.0 / 298.257223563
    gm: float = 3.986004418e14
    gamma_equator: float = 9.7803253359
    gamma_pole: float = 9.8321849378

    def __post_init__(self) -> None:
        for name in ("omega_ie", "semi_major_axis", "flattening", "gm", "gamma_equator", "gamma_pole"):
            if not getattr(self, name) > 0:
                raise ValueError(f"EarthModel.{name} must be positive")
        if not self.flattening < 1:
            raise ValueError("EarthModel.flattening must be < 1")

    @property
    def params(self) -> NDArray[np.float64]:
        """Packed constants for the compiled kernels."""
        return np.array(
            [self.semi_major_axis, self.flattening, self.omega_ie, self.gamma_equator, self.gamma_pole, self.gm]
        )

    @property
    def omega_vec(self) -> NDArray[np.float64]:
        """Earth rate in ECEF, ``(0, 0, omega_ie)``."""
        return np.array([0.0, 0.0, self.omega_ie])

    @property
    def e2(self) -> float:
        return self.flattening * (2.0 - self.flattening)


WGS84 = EarthModel()


@dataclass(frozen=True)
class Geodetic:
    """Geodetic coordinates, angles in radians."""

    lat: float
    lon: float
    height: float

    def __post_init__(self) -> None:
        if not abs(self.lat) <= math.pi / 2 + 1e-15:
            raise ValueError(f"latitude {self.lat} rad out of range")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, height: float) -> Geodetic:
        return cls(math.radians(lat_deg), math.radians(lon_deg), float(height))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------
@njit
def _geodetic(p, params):
    """ECEF -> (lat, lon, h, converged)."""
    a = params[_A]
    f = params[_F]
    e2 = f * (2.0 - f)
    x, y, z = p[0], p[1], p[2]
    lon = math.atan2(y, x)
    r = math.hypot(x, y)
    lat = math.atan2(z, r * (1.0 - e2))
    ok = False
    for _ in range(GEODETIC_MAX_ITER):
        s = math.sin(lat)
        n = a / math.sqrt(1.0 - e2 * s * s)
        new = math.atan2(z + e2 * n * s, r)
        d = abs(new - lat)
        lat = new
        if d < GEODETIC_TOL:
            ok = True
            break
    s = math.sin(lat)
    c = math.cos(lat)
    h = r * c + z * s - a * math.sqrt(1.0 - e2 * s * s)
    return lat, lon, h, ok


@njit
def _ecef(lat, lon, h, params):
    a = params[_A]
    f = params[_F]
    e2 = f * (2.0 - f)
    s = math.sin(lat)
    c = math.cos(lat)
    n = a / math.sqrt(1.0 - e2 * s * s)
    out = np.empty(3)
    out[0] = (n + h) * c * math.cos(lon)
    out[1] = (n + h) * c * math.sin(lon)
    out[2] = (n * (1.0 - e2) + h) * s
    return out


@njit
def _c_en(lat, lon):
    """Rotation ECEF -> NED (rows are north, east, down)."""
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    out = np.empty((3, 3))
    out[0, 0] = -sl * co
    out[0, 1] = -sl * so
    out[0, 2] = cl
    out[1, 0] = -so
    out[1, 1] = co
    out[1, 2] = 0.0
    out[2, 0] = -cl * co
    out[2, 1] = -cl * so
    out[2, 2] = -sl
    return out


@njit
def _normal_gravity(lat, h, params):
    a = params[_A]
    f = params[_F]
    w = params[_W]
    ge = params[_GE]
    gp = params[_GP]
    gm = params[_GM]
    e2 = f * (2.0 - f)
    b = a * (1.0 - f)
    k = (b * gp - a * ge) / (a * ge)
    m = w * w * a * a * b / gm
    s2 = math.sin(lat) ** 2
    g0 = ge * (1.0 + k * s2) / math.sqrt(1.0 - e2 * s2)
    return g0 * (1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h)


@njit
def _gravity(p, params):
    lat, lon, h, _ = _geodetic(p, params)
    g = _normal_gravity(lat, h, params)
    cl = math.cos(lat)
    out = np.empty(3)
    out[0] = -g * cl * math.cos(lon)
    out[1] = -g * cl * math.sin(lon)
    out[2] = -g * math.sin(lat)
    return out


@njit
def _gravitation(p, params):
    # gbar = g + (w x)^2 p = g - w^2 (px, py, 0)
    w2 = params[_W] * params[_W]
    out = _gravity(p, params)
    out[0] -= w2 * p[0]
    out[1] -= w2 * p[1]
    return out


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------
def _position(p: ArrayLike) -> NDArray[np.float64]:
    p = np.ascontiguousarray(np.asarray(p, dtype=np.float64))
    if p.shape != (3,):
        raise ValueError(f"position must have shape (3,), got {p.shape}")
    if not np.linalg.norm(p) > MIN_RADIUS:
        raise DomainError(f"|p| = {np.linalg.norm(p):.6g} m is below {MIN_RADIUS:g} m")
    return p


def gravity(p: ArrayLike, em: EarthModel = WGS84) -> NDArray[np.float64]:
    """Normal gravity vector in ECEF (m/s^2) at ECEF position ``p``."""
    return _gravity(_position(p), em.params)


def gravitation(p: ArrayLike, em: EarthModel = WGS84) -> NDArray[np.float64]:
    """Gravitational acceleration ``g + (w x)^2 p`` in ECEF (m/s^2)."""
    return _gravitation(_position(p), em.params)


def ecef_to_geodetic(p: ArrayLike, em: EarthModel = WGS84) -> Geodetic:
    """Convert ECEF position to geodetic coordinates.

    Raises
    ------
    ConvergenceError
        If the latitude iteration does not settle to 1e-12 rad.
    """
    lat, lon, h, ok = _geodetic(_position(p), em.params)
    if not ok:
        raise ConvergenceError("geodetic latitude iteration did not converge")
    return Geodetic(lat, lon, h)


def geodetic_to_ecef(g: Geodetic, em: EarthModel = WGS84) -> NDArray[np.float64]:
    """Convert geodetic coordinates to ECEF position (m)."""
    return _ecef(g.lat, g.lon, g.height, em.params)


def ecef_to_ned_rotation(g: Geodetic) -> NDArray[np.float64]:
    """Rotation matrix ``C_e^n`` whose rows are the north, east, down axes."""
    return _c_en(g.lat, g.lon)


def radii(lat: float, em: EarthModel = WGS84) -> tuple[float, float]:
    """Meridian and prime-vertical radii of curvature (m)."""
    e2 = em.e2
    s2 = math.sin(lat) ** 2
    n = em.semi_major_axis / math.sqrt(1.0 - e2 * s2)
    m = n * (1.0 - e2) / (1.0 - e2 * s2)
    return m, n


def euler_to_dcm(roll: float, pitch: float, yaw: float) -> NDArray[np.float64]:
    """Body (FRD) to NED rotation ``C_b^n = Rz(yaw) Ry(pitch) Rx(roll)``; radians."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def dcm_to_euler(C: ArrayLike) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_dcm`; returns ``(roll, pitch, yaw)`` in radians."""
    C = np.asarray(C, dtype=np.float64)
    pitch = -math.asin(max(-1.0, min(1.0, C[2, 0])))
    roll = math.atan2(C[2, 1], C[2, 2])
    yaw = math.atan2(C[1, 0], C[0, 0])
    return roll, pitch, yaw
