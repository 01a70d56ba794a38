"""Error-state models for the right (RSE), left (LSE) and SO(3) (SO) filters.

State ordering is ``[phi, dv, dp, gyro_bias, accel_bias]`` (15 states).

Error definitions, with ``(C, vb, p)`` the truth and ``(Ce, vbe, pe)`` the
estimate in transformed coordinates (classic ``v`` for the SO model):

right
    ``phi = log(C Ce^T)``, ``dv = (vbe x) phi - (vbe - vb)``,
    ``dp = (pe x) phi - (pe - p)``
left
    ``phi = log(Ce^T C)``, ``dv = Ce^T (vb - vbe)``, ``dp = Ce^T (p - pe)``
so
    ``phi = log(C Ce^T)``, ``dv = ve - v``, ``dp = pe - p``

For right and left these are the first-order vector errors of the group
errors ``X Xe^-1`` and ``Xe^-1 X``. They are chosen so that the linear
feedback corrections in :func:`correct_nav` invert them exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from ._linalg import mm, mtv, mv
from .earth import WGS84, EarthModel, _gravitation
from .liegroup import _cross, _skew, _so3_exp, _so3_log, _vec3
from .mechanization import ImuSample, NavState, TransformedNavState

RIGHT, LEFT, SO = 0, 1, 2
KINDS = {"right": RIGHT, "left": LEFT, "so": SO}
KIND_NAMES = {v: k for k, v in KINDS.items()}
# short filter names used by the harness
FILTER_KINDS = {"rse": "right", "lse": "left", "so": "so"}

NX = 15


def kind_code(kind: str | int) -> int:
    """Integer code of an error definition name."""
    if isinstance(kind, (int, np.integer)):
        if int(kind) not in KIND_NAMES:
            raise ValueError(f"unknown error definition code {kind}")
        return int(kind)
    k = FILTER_KINDS.get(kind, kind)
    if k not in KINDS:
        raise ValueError(f"unknown error definition {kind!r}; expected right, left or so")
    return KINDS[k]


@dataclass(frozen=True)
class ErrorState15:
    """Tagged 15-state error vector."""

    kind: str
    phi: NDArray[np.float64]
    dv: NDArray[np.float64]
    dp: NDArray[np.float64]
    gyro_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    accel_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown error definition {self.kind!r}")
        for name in ("phi", "dv", "dp", "gyro_bias", "accel_bias"):
            a = _vec3(getattr(self, name), name)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"error component {name} is not finite")
            object.__setattr__(self, name, a)

    @classmethod
    def from_vector(cls, kind: str, x: ArrayLike) -> ErrorState15:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (NX,):
            raise ValueError(f"error vector must have shape (15,), got {x.shape}")
        return cls(kind, x[0:3], x[3:6], x[6:9], x[9:12], x[12:15])

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.phi, self.dv, self.dp, self.gyro_bias, self.accel_bias])


@dataclass(frozen=True)
class NoiseSpec:
    """IMU noise densities and bias magnitudes (SI)."""

    gyro_noise_psd: NDArray[np.float64]
    accel_noise_psd: NDArray[np.float64]
    gyro_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    accel_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        for name in ("gyro_noise_psd", "accel_noise_psd", "gyro_bias", "accel_bias"):
            a = np.ascontiguousarray(np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (3,)))
            if np.any(a < 0):
                raise ValueError(f"NoiseSpec.{name} must be nonnegative")
            object.__setattr__(self, name, a)

    def qc(self) -> NDArray[np.float64]:
        """Diagonal of the continuous noise intensity ``Q_c``."""
        return np.concatenate([self.gyro_noise_psd**2, self.accel_noise_psd**2])


@dataclass(frozen=True)
class LinearModel:
    """Linearized model pieces; ``F`` and ``G`` are absent for pure measurements."""

    H: NDArray[np.float64]
    z: NDArray[np.float64]
    R: NDArray[np.float64]
    F: NDArray[np.float64] | None = None
    G: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=np.float64))
        z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        R = np.atleast_2d(np.asarray(self.R, dtype=np.float64))
        m = z.shape[0]
        if H.shape != (m, NX) or R.shape != (m, m):
            raise ValueError(f"inconsistent shapes H {H.shape}, z {z.shape}, R {R.shape}")
        if not np.allclose(R, R.T, rtol=0, atol=1e-12 * max(1.0, np.abs(R).max())):
            raise ValueError("R must be symmetric")
        object.__setattr__(self, "H", np.ascontiguousarray(H))
        object.__setattr__(self, "z", np.ascontiguousarray(z))
        object.__setattr__(self, "R", np.ascontiguousarray(R))


# --------------------------------------------------------------------------
# kernels: system matrices
# --------------------------------------------------------------------------
@njit
def _put(M, r, c, B, scale):
    for i in range(B.shape[0]):
        for j in range(B.shape[1]):
            M[r + i, c + j] = scale * B[i, j]


@njit
def _put_eye(M, r, c, scale):
    for i in range(3):
        M[r + i, c + i] = scale


@njit
def _f_right(C, vb, p, gbar, wie):
    F = np.zeros((NX, NX))
    G = np.zeros((NX, 6))
    W = _skew(wie)
    vC = mm(_skew(vb), C)
    pC = mm(_skew(p), C)
    _put(F, 0, 0, W, -1.0)
    _put(F, 0, 9, C, -1.0)
    _put(F, 3, 0, _skew(gbar), 1.0)
    _put(F, 3, 3, W, -1.0)
    _put(F, 3, 9, vC, -1.0)
    _put(F, 3, 12, C, -1.0)
    _put_eye(F, 6, 3, 1.0)
    _put(F, 6, 6, W, -1.0)
    _put(F, 6, 9, pC, -1.0)
    _put(G, 0, 0, C, -1.0)
    _put(G, 3, 0, vC, -1.0)
    _put(G, 3, 3, C, -1.0)
    _put(G, 6, 0, pC, -1.0)
    return F, G


@njit
def _f_left(gyro, accel):
    F = np.zeros((NX, NX))
    G = np.zeros((NX, 6))
    Wb = _skew(gyro)
    _put(F, 0, 0, Wb, -1.0)
    _put_eye(F, 0, 9, -1.0)
    _put(F, 3, 0, _skew(accel), -1.0)
    _put(F, 3, 3, Wb, -1.0)
    _put_eye(F, 3, 12, -1.0)
    _put_eye(F, 6, 3, 1.0)
    _put(F, 6, 6, Wb, -1.0)
    _put_eye(G, 0, 0, -1.0)
    _put_eye(G, 3, 3, -1.0)
    return F, G


@njit
def _f_so(C, accel, wie):
    F = np.zeros((NX, NX))
    G = np.zeros((NX, 6))
    W = _skew(wie)
    _put(F, 0, 0, W, -1.0)
    _put(F, 0, 9, C, -1.0)
    _put(F, 3, 0, _skew(mv(C, accel)), 1.0)
    _put(F, 3, 3, W, -2.0)
    _put(F, 3, 12, C, 1.0)
    _put_eye(F, 6, 3, 1.0)
    _put(G, 0, 0, C, -1.0)
    _put(G, 3, 3, C, 1.0)
    return F, G


@njit
def _f_any(kind, C, v, p, gyro, accel, gbar, wie):
    if kind == RIGHT:
        return _f_right(C, v, p, gbar, wie)
    if kind == LEFT:
        return _f_left(gyro, accel)
    return _f_so(C, accel, wie)


# --------------------------------------------------------------------------
# kernels: measurement models
# --------------------------------------------------------------------------
@njit
def _h_gps_left(C, vb, y):
    H = np.zeros((3, NX))
    _put_eye(H, 0, 3, -1.0)
    return H, mtv(C, vb - y)


@njit
def _h_gps_right(vb, y):
    H = np.zeros((3, NX))
    _put(H, 0, 0, _skew(vb), 1.0)
    _put_eye(H, 0, 3, -1.0)
    return H, vb - y


@njit
def _h_gps_so(v, p, v_gps, p_gps):
    H = np.zeros((6, NX))
    _put_eye(H, 0, 3, 1.0)
    _put_eye(H, 3, 6, 1.0)
    z = np.empty(6)
    z[0:3] = v - v_gps
    z[3:6] = p - p_gps
    return H, z


@njit
def _odo_innovation(C, vb, p, v_body, wie):
    return vb - _cross(wie, p) - mv(C, v_body)


@njit
def _h_odo_right(C, vb, p, v_body, wie):
    H = np.zeros((3, NX))
    W = _skew(wie)
    _put(H, 0, 0, mm(_skew(p), W), -1.0)
    _put_eye(H, 0, 3, -1.0)
    _put(H, 0, 6, W, 1.0)
    return H, _odo_innovation(C, vb, p, v_body, wie)


@njit
def _h_odo_left(C, vb, p, v_body, wie):
    H = np.zeros((3, NX))
    W = _skew(wie)
    Px = _skew(p)
    A = mm(W, Px) - mm(Px, W) - _skew(vb)
    _put(H, 0, 0, mm(A, C), 1.0)
    _put(H, 0, 3, C, -1.0)
    _put(H, 0, 6, mm(W, C), 1.0)
    return H, _odo_innovation(C, vb, p, v_body, wie)


@njit
def _h_odo_so(C, v, v_body):
    H = np.zeros((3, NX))
    _put(H, 0, 0, _skew(v), -1.0)
    _put_eye(H, 0, 3, 1.0)
    return H, v - mv(C, v_body)


# --------------------------------------------------------------------------
# kernels: error vectors and their exact inverses
# --------------------------------------------------------------------------
@njit
def _nav_error(kind, C, v, p, Ce, ve, pe):
    """9-vector navigation error of estimate (Ce, ve, pe) w.r.t. truth (C, v, p)."""
    out = np.empty(9)
    if kind == LEFT:
        phi, _ = _so3_log(mm(Ce.T, C))
        out[0:3] = phi
        out[3:6] = mtv(Ce, v - ve)
        out[6:9] = mtv(Ce, p - pe)
        return out
    phi, _ = _so3_log(mm(C, Ce.T))
    out[0:3] = phi
    if kind == RIGHT:
        out[3:6] = _cross(ve, phi) - (ve - v)
        out[6:9] = _cross(pe, phi) - (pe - p)
    else:
        out[3:6] = ve - v
        out[6:9] = pe - p
    return out


@njit
def _correct_nav(kind, Ce, ve, pe, dx):
    """Apply a navigation error estimate dx[0:9] to the estimate."""
    phi = dx[0:3].copy()
    dv = dx[3:6].copy()
    dp = dx[6:9].copy()
    if kind == LEFT:
        return mm(Ce, _so3_exp(phi)), mv(Ce, dv) + ve, mv(Ce, dp) + pe
    C = mm(_so3_exp(phi), Ce)
    if kind == RIGHT:
        return C, ve + dv - _cross(ve, phi), pe + dp - _cross(pe, phi)
    return C, ve - dv, pe - dp


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------
def _gb(pos, em, gravity):
    if gravity is None:
        return _gravitation(np.ascontiguousarray(pos), em.params)
    return _vec3(gravity, "gravity")


def f_right(
    nav: TransformedNavState, u: ImuSample, em: EarthModel = WGS84, gravity: ArrayLike | None = None
) -> tuple[NDArray, NDArray]:
    """``(F, G)`` of the right-invariant error model.

    The IMU sample is not used; it is accepted for a uniform signature.
    """
    return _f_right(nav.att, nav.tvel, nav.pos, _gb(nav.pos, em, gravity), em.omega_vec)


def f_left(u: ImuSample) -> tuple[NDArray, NDArray]:
    """``(F, G)`` of the left-invariant error model; depends on the IMU only."""
    return _f_left(u.gyro, u.accel)


def f_so(nav: NavState, u: ImuSample, em: EarthModel = WGS84) -> tuple[NDArray, NDArray]:
    """``(F, G)`` of the SO(3) + R^6 error model."""
    return _f_so(nav.att, u.accel, em.omega_vec)


def gps_observation(v_gps: ArrayLike, p_gps: ArrayLike, em: EarthModel = WGS84) -> NDArray[np.float64]:
    """Transformed-velocity observation ``y = v_gps + wie x p_gps``."""
    return _vec3(v_gps) + np.cross(em.omega_vec, _vec3(p_gps))


def h_gps_left(nav: TransformedNavState, y: ArrayLike) -> tuple[NDArray, NDArray]:
    """Rotated GPS innovation ``Ce^T (vbe - y)`` with constant ``H = [0, -I, 0, 0, 0]``."""
    return _h_gps_left(nav.att, nav.tvel, _vec3(y, "y"))


def h_gps_right(nav: TransformedNavState, y: ArrayLike) -> tuple[NDArray, NDArray]:
    """GPS innovation ``vbe - y`` with ``H = [(vbe x), -I, 0, 0, 0]``."""
    return _h_gps_right(nav.tvel, _vec3(y, "y"))


def h_gps_so(nav: NavState, v_gps: ArrayLike, p_gps: ArrayLike) -> tuple[NDArray, NDArray]:
    """GPS innovation ``[ve - v_gps; pe - p_gps]``."""
    return _h_gps_so(nav.vel, nav.pos, _vec3(v_gps), _vec3(p_gps))


def h_odo_right(nav: TransformedNavState, v_body: ArrayLike, em: EarthModel = WGS84) -> tuple[NDArray, NDArray]:
    """Odometer innovation ``vbe - wie x pe - Ce v_b`` under the right error."""
    return _h_odo_right(nav.att, nav.tvel, nav.pos, _vec3(v_body), em.omega_vec)


def h_odo_left(nav: TransformedNavState, v_body: ArrayLike, em: EarthModel = WGS84) -> tuple[NDArray, NDArray]:
    """Odometer innovation under the left error."""
    return _h_odo_left(nav.att, nav.tvel, nav.pos, _vec3(v_body), em.omega_vec)


def h_odo_so(nav: NavState, v_body: ArrayLike) -> tuple[NDArray, NDArray]:
    """Odometer innovation ``ve - Ce v_b`` under the SO error."""
    return _h_odo_so(nav.att, nav.vel, _vec3(v_body))


def _nav_arrays(nav):
    if isinstance(nav, TransformedNavState):
        return nav.att, nav.tvel, nav.pos
    return nav.att, nav.vel, nav.pos


def error_state(
    truth: TransformedNavState | NavState, estimate: TransformedNavState | NavState, kind: str
) -> ErrorState15:
    """Navigation error of ``estimate`` under ``kind``; bias entries are zero.

    Right and left expect transformed states, SO expects classic states.
    """
    code = kind_code(kind)
    want = NavState if code == SO else TransformedNavState
    if not (isinstance(truth, want) and isinstance(estimate, want)):
        raise TypeError(f"{KIND_NAMES[code]} errors are defined on {want.__name__}")
    x = np.zeros(NX)
    x[:9] = _nav_error(code, *_nav_arrays(truth), *_nav_arrays(estimate))
    return ErrorState15.from_vector(KIND_NAMES[code], x)


def correct_nav(
    estimate: TransformedNavState | NavState, dx: ErrorState15
) -> TransformedNavState | NavState:
    """Remove the navigation error ``dx`` from ``estimate`` (exact inverse of :func:`error_state`)."""
    code = kind_code(dx.kind)
    C, v, p = _correct_nav(code, *_nav_arrays(estimate), dx.as_vector())
    return NavState(C, v, p) if code == SO else TransformedNavState(C, v, p)
