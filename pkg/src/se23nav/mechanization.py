"""Strapdown mechanizations in ECEF.

Classic form (ground velocity ``v``)::

    dC/dt = C (w x) - (wie x) C
    dv/dt = C f - 2 (wie x) v - (wie x)^2 p + gbar
    dp/dt = v

Transformed form with ``vbar = v + wie x p``::

    dC/dt    = C (w x) - (wie x) C
    dvbar/dt = C f - (wie x) vbar + gbar
    dp/dt    = vbar - (wie x) p

On the group ``X = (C, vbar, p)`` the transformed dynamics split as
``f(X) = X A_b + A_e X`` with ``A_b`` built from the IMU and ``A_e`` from Earth
rate and gravitation. For inputs held constant over a step the flow is
``X+ = exp(A_e dt) X exp(A_b dt)``, which :func:`propagate` evaluates in closed
form. Because the step is an exact group-affine map, the discrete right and
left errors evolve exactly linearly when gravitation is held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from ._linalg import mm, mtv, mv
from .earth import WGS84, EarthModel, _gravitation
from .liegroup import (
    ExtendedPose,
    _cross,
    _left_jacobian,
    _left_jacobian_inv,
    _maybe_orthonormalize,
    _mat3,
    _skew,
    _so3_exp,
    _so3_log,
    _so3_n,
    _vec3,
)

MAX_DT = 0.1


@dataclass(frozen=True)
class NavState:
    """Classic ECEF navigation state ``(C_b^e, v^e, p^e)``."""

    att: NDArray[np.float64]
    vel: NDArray[np.float64]
    pos: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "att", _mat3(self.att, "att"))
        object.__setattr__(self, "vel", _vec3(self.vel, "vel"))
        object.__setattr__(self, "pos", _vec3(self.pos, "pos"))


@dataclass(frozen=True)
class TransformedNavState:
    """Transformed ECEF navigation state ``(C_b^e, vbar^e, p^e)``."""

    att: NDArray[np.float64]
    tvel: NDArray[np.float64]
    pos: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "att", _mat3(self.att, "att"))
        object.__setattr__(self, "tvel", _vec3(self.tvel, "tvel"))
        object.__setattr__(self, "pos", _vec3(self.pos, "pos"))

    def as_pose(self) -> ExtendedPose:
        return ExtendedPose(self.att, self.tvel, self.pos)

    @classmethod
    def from_pose(cls, x: ExtendedPose) -> TransformedNavState:
        return cls(x.rot, x.vel, x.pos)


@dataclass(frozen=True)
class ImuSample:
    """Body rate (rad/s) and specific force (m/s^2) held over ``[t, t + dt)``."""

    t: float
    gyro: NDArray[np.float64]
    accel: NDArray[np.float64]
    dt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "gyro", _vec3(self.gyro, "gyro"))
        object.__setattr__(self, "accel", _vec3(self.accel, "accel"))
        if not self.dt > 0:
            raise ValueError(f"ImuSample.dt must be positive, got {self.dt}")


def to_transformed(s: NavState, em: EarthModel = WGS84) -> TransformedNavState:
    """Map ``v`` to ``vbar = v + wie x p``."""
    return TransformedNavState(s.att, s.vel + np.cross(em.omega_vec, s.pos), s.pos)


def from_transformed(s: TransformedNavState, em: EarthModel = WGS84) -> NavState:
    """Map ``vbar`` back to ``v = vbar - wie x p``."""
    return NavState(s.att, s.tvel - np.cross(em.omega_vec, s.pos), s.pos)


def _gbar(pos: NDArray, em: EarthModel, gravity: ArrayLike | None) -> NDArray[np.float64]:
    if gravity is None:
        return _gravitation(np.ascontiguousarray(pos, dtype=np.float64), em.params)
    return _vec3(gravity, "gravity")


def classic_derivative(
    s: NavState, u: ImuSample, em: EarthModel = WGS84, gravity: ArrayLike | None = None
) -> NavState:
    """Time derivative of the classic state, returned as a NavState of rates.

    ``gravity`` overrides the gravitation vector (held fixed) when given.
    """
    W = _skew(em.omega_vec)
    gb = _gbar(s.pos, em, gravity)
    dC = s.att @ _skew(u.gyro) - W @ s.att
    dv = s.att @ u.accel - 2.0 * W @ s.vel - W @ (W @ s.pos) + gb
    return NavState(dC, dv, s.vel.copy())


def transformed_derivative(
    s: TransformedNavState, u: ImuSample, em: EarthModel = WGS84, gravity: ArrayLike | None = None
) -> TransformedNavState:
    """Time derivative of the transformed state."""
    W = _skew(em.omega_vec)
    gb = _gbar(s.pos, em, gravity)
    dC = s.att @ _skew(u.gyro) - W @ s.att
    dv = s.att @ u.accel - W @ s.tvel + gb
    return TransformedNavState(dC, dv, s.tvel - W @ s.pos)


# --------------------------------------------------------------------------
# discrete propagation kernels
# --------------------------------------------------------------------------
@njit
def _earth_terms(wie, dt):
    """Rotation and integrals of the Earth-rate flow over dt."""
    we = -wie * dt
    return _so3_exp(we), _left_jacobian(we), _so3_n(we)


@njit
def _step_transformed_e(C, vb, p, gyro, accel, dt, gbar, Re, Je, Ne):
    wb = gyro * dt
    Rb = _so3_exp(wb)
    fJ = mv(_left_jacobian(wb), accel)
    fN = mv(_so3_n(wb), accel)
    dv = mv(C, fJ) * dt
    dp = mv(C, fN) * (dt * dt)
    v1 = vb + dv
    p1 = p + vb * dt + dp
    C1 = _maybe_orthonormalize(mm(Re, mm(C, Rb)))
    v2 = mv(Re, v1) + mv(Je, gbar) * dt
    p2 = mv(Re, p1) + (mv(Je, gbar) - mv(Ne, gbar)) * (dt * dt)
    return C1, v2, p2


@njit
def _step_transformed(C, vb, p, gyro, accel, dt, gbar, wie):
    """Exact flow of the transformed mechanization over one held sample."""
    Re, Je, Ne = _earth_terms(wie, dt)
    return _step_transformed_e(C, vb, p, gyro, accel, dt, gbar, Re, Je, Ne)


@njit
def _step_classic_e(C, v, p, gyro, accel, dt, gbar, wie, Re):
    wb = gyro * dt
    Rb = _so3_exp(wb)
    dvf = mv(C, mv(_left_jacobian(wb), accel)) * dt
    # the ECEF frame turns under the body during the step: midpoint attitude
    dvf = dvf - (0.5 * dt) * _cross(wie, dvf)
    dpf = mv(C, mv(_so3_n(wb), accel)) * (dt * dt)
    a0 = gbar - 2.0 * _cross(wie, v) - _cross(wie, _cross(wie, p))
    vm = v + 0.5 * (dvf + a0 * dt)
    pm = p + 0.5 * dt * v
    am = gbar - 2.0 * _cross(wie, vm) - _cross(wie, _cross(wie, pm))
    v1 = v + dvf + am * dt
    p1 = p + v * dt + dpf + 0.5 * (dt * dt) * a0
    C1 = _maybe_orthonormalize(mm(Re, mm(C, Rb)))
    return C1, v1, p1


@njit
def _step_classic(C, v, p, gyro, accel, dt, gbar, wie):
    """Second-order step of the classic mechanization.

    Attitude and the specific-force increments follow the same closed forms as
    the transformed step; Coriolis, centripetal and gravitation terms use a
    midpoint rule.
    """
    return _step_classic_e(C, v, p, gyro, accel, dt, gbar, wie, _so3_exp(-wie * dt))


@njit
def _propagate_many(C, v, p, gyro, accel, dts, wie, params, gfix, use_gfix, classic):
    """Fold a block of IMU samples; returns all intermediate states."""
    n = dts.shape[0]
    Cs = np.empty((n + 1, 3, 3))
    vs = np.empty((n + 1, 3))
    ps = np.empty((n + 1, 3))
    Cs[0] = C
    vs[0] = v
    ps[0] = p
    dt_prev = -1.0
    Re, Je, Ne = _earth_terms(wie, 0.0)
    for k in range(n):
        dt = dts[k]
        if dt != dt_prev:
            Re, Je, Ne = _earth_terms(wie, dt)
            dt_prev = dt
        g = gfix if use_gfix else _gravitation(p, params)
        if classic:
            C, v, p = _step_classic_e(C, v, p, gyro[k], accel[k], dt, g, wie, Re)
        else:
            C, v, p = _step_transformed_e(C, v, p, gyro[k], accel[k], dt, g, Re, Je, Ne)
        Cs[k + 1] = C
        vs[k + 1] = v
        ps[k + 1] = p
    return Cs, vs, ps


@njit
def _invert_step(C, vb, p, C1, vb1, dt, gbar, wie):
    """IMU sample that carries (C, vb) to (C1, vb1) under the exact flow."""
    Re, Je, _ = _earth_terms(wie, dt)
    Rb = mm(C.T, mm(Re.T, C1))
    wb, _ = _so3_log(Rb)
    rhs = mtv(C, mtv(Re, vb1 - mv(Je, gbar) * dt) - vb)
    return wb / dt, mv(_left_jacobian_inv(wb), rhs) / dt


def _check_dt(dt: float) -> None:
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}] s, got {dt}")


def propagate(
    s: TransformedNavState, u: ImuSample, em: EarthModel = WGS84, gravity: ArrayLike | None = None
) -> TransformedNavState:
    """Advance a transformed state over one IMU sample.

    The sample is held constant over ``u.dt`` and gravitation is evaluated at
    the start position (or fixed to ``gravity``).
    """
    _check_dt(u.dt)
    g = _gbar(s.pos, em, gravity)
    C, v, p = _step_transformed(s.att, s.tvel, s.pos, u.gyro, u.accel, float(u.dt), g, em.omega_vec)
    return TransformedNavState(C, v, p)


def propagate_classic(
    s: NavState, u: ImuSample, em: EarthModel = WGS84, gravity: ArrayLike | None = None
) -> NavState:
    """Advance a classic state over one IMU sample."""
    _check_dt(u.dt)
    g = _gbar(s.pos, em, gravity)
    C, v, p = _step_classic(s.att, s.vel, s.pos, u.gyro, u.accel, float(u.dt), g, em.omega_vec)
    return NavState(C, v, p)


def propagate_stream(
    s: TransformedNavState | NavState,
    gyro: ArrayLike,
    accel: ArrayLike,
    dt: ArrayLike,
    em: EarthModel = WGS84,
    gravity: ArrayLike | None = None,
) -> tuple[NDArray, NDArray, NDArray]:
    """Fold an IMU stream through :func:`propagate` (or the classic step).

    Returns stacked attitudes ``(n+1, 3, 3)``, velocities and positions
    ``(n+1, 3)`` including the initial state.
    """
    gyro = np.ascontiguousarray(gyro, dtype=np.float64)
    accel = np.ascontiguousarray(accel, dtype=np.float64)
    dts = np.ascontiguousarray(np.broadcast_to(np.asarray(dt, dtype=np.float64), (gyro.shape[0],)))
    if np.any(dts <= 0) or np.any(dts > MAX_DT):
        raise ValueError(f"all dt must be in (0, {MAX_DT}] s")
    classic = isinstance(s, NavState)
    v = s.vel if classic else s.tvel
    use_g = gravity is not None
    gfix = _vec3(gravity, "gravity") if use_g else np.zeros(3)
    return _propagate_many(
        s.att, v, s.pos, gyro, accel, dts, em.omega_vec, em.params, gfix, use_g, classic
    )


# --------------------------------------------------------------------------
# group-level dynamics
# --------------------------------------------------------------------------
def group_dynamics(
    x: ExtendedPose, u: ImuSample, em: EarthModel = WGS84, gravity: ArrayLike | None = None, classic: bool = False
) -> NDArray[np.float64]:
    """5x5 matrix ``f(X)`` of the transformed dynamics.

    With ``classic=True`` the classic mechanization is written on the group
    ``(C, v, p)`` instead; it is not group affine.
    """
    W = _skew(em.omega_vec)
    g = _gbar(x.pos, em, gravity)
    out = np.zeros((5, 5))
    out[:3, :3] = x.rot @ _skew(u.gyro) - W @ x.rot
    if classic:
        out[:3, 3] = x.rot @ u.accel - 2.0 * W @ x.vel - W @ (W @ x.pos) + g
        out[:3, 4] = x.vel
    else:
        out[:3, 3] = x.rot @ u.accel - W @ x.vel + g
        out[:3, 4] = x.vel - W @ x.pos
    return out


def group_affine_residual(
    x1: ExtendedPose,
    x2: ExtendedPose,
    u: ImuSample,
    em: EarthModel = WGS84,
    gravity: ArrayLike | None = None,
    classic: bool = False,
) -> float:
    """Frobenius norm of ``f(X1 X2) - f(X1) X2 - X1 f(X2) + X1 f(I) X2``.

    Gravitation is held fixed for all four evaluations; by default it is taken
    at the position of ``x1``.
    """
    g = _gbar(x1.pos, em, gravity)
    M1, M2 = x1.matrix(), x2.matrix()
    ident = ExtendedPose.identity()
    prod = ExtendedPose.from_matrix(M1 @ M2)
    r = (
        group_dynamics(prod, u, em, g, classic)
        - group_dynamics(x1, u, em, g, classic) @ M2
        - M1 @ group_dynamics(x2, u, em, g, classic)
        + M1 @ group_dynamics(ident, u, em, g, classic) @ M2
    )
    return float(np.linalg.norm(r))
