"""Self-checks behind ``se23nav verify``.

Each check returns a :class:`Check` with the measured figure and its bound.
The finite-difference and matrix-exponential references here are computed
from the nonlinear models, independently of the closed-form Jacobians.
"""
from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..earth import WGS84, Geodetic, _c_en, gravitation
from ..error_models import LEFT, RIGHT, SO, _f_left, _f_right, _f_so, _h_gps_left, _h_gps_right, _h_gps_so
from ..error_models import _h_odo_left, _h_odo_right, _h_odo_so, _nav_error, _correct_nav
from ..liegroup import (
    ExtendedPose,
    Twist,
    _left_jacobian,
    _left_jacobian_inv,
    left_error,
    right_error,
    se23_exp,
    se23_log,
    so3_exp,
    so3_log,
)
from ..mechanization import (
    ImuSample,
    NavState,
    TransformedNavState,
    classic_derivative,
    group_affine_residual,
    group_dynamics,
    propagate_stream,
    to_transformed,
    transformed_derivative,
)
from ..simulator import generate_truth, static_profile

ORIGIN = Geodetic.from_degrees(30.0, 114.0, 20.0)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (bound {self.bound:.1e}, {self.seconds:.2f} s)"


def _timed(name: str, bound: float, fn: Callable[[], float], below: bool = True) -> Check:
    t0 = time.perf_counter()
    v = float(fn())
    return Check(name, v, bound, v < bound if below else v > bound, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# random states
# --------------------------------------------------------------------------
def random_pose(rng: np.random.Generator, vmax: float = 500.0) -> ExtendedPose:
    """Pose with an Earth-surface position and a speed up to ``vmax``."""
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    v = rng.normal(size=3)
    v *= rng.uniform(0.0, vmax) / np.linalg.norm(v)
    return ExtendedPose(so3_exp(rng.normal(size=3) * 2.0), v, u * rng.uniform(6.36e6, 6.40e6))


def random_imu(rng: np.random.Generator) -> ImuSample:
    return ImuSample(0.0, rng.normal(size=3) * 0.5, rng.normal(size=3) * 5.0, 0.01)


# --------------------------------------------------------------------------
# group affinity
# --------------------------------------------------------------------------
def group_affine_relative(n: int = 1000, seed: int = 0, classic: bool = False) -> np.ndarray:
    """Relative residuals ``|r| / |f(X1 X2)|`` over ``n`` random pairs."""
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for i in range(n):
        a, b = random_pose(rng), random_pose(rng)
        u = random_imu(rng)
        g = gravitation(a.pos)
        ab = ExtendedPose.from_matrix(a.matrix() @ b.matrix())
        out[i] = group_affine_residual(a, b, u, gravity=g, classic=classic) / np.linalg.norm(
            group_dynamics(ab, u, gravity=g, classic=classic)
        )
    return out


# --------------------------------------------------------------------------
# log-linearity
# --------------------------------------------------------------------------
def log_linearity_mismatch(kind: str, axis: int, angle_deg: float = 30.0, duration: float = 60.0,
                           dt: float = 0.01) -> float:
    """Relative gap between the linearly propagated error and the true error.

    Static truth, noise free. The estimate starts with an attitude error of
    ``angle_deg`` about local axis ``axis`` (north, east, down) and is
    propagated with the same IMU stream and a common gravitation vector.
    Right and left errors are compared in Lie-algebra coordinates; the SO
    error in its own coordinates.
    """
    truth = generate_truth(static_profile(duration), ORIGIN, dt)
    g = gravitation(truth.pos[0])
    wie = WGS84.omega_vec
    e = np.zeros(3)
    e[axis] = math.radians(angle_deg)
    Cen = _c_en(ORIGIN.lat, ORIGIN.lon)
    n = len(truth)
    if kind in ("right", "left"):
        x0 = to_transformed(truth.nav(0))
        Ce = so3_exp(Cen.T @ e) @ x0.att
        Ct, vt, pt = propagate_stream(x0, truth.gyro, truth.accel, dt, gravity=g)
        Cs, vs, ps = propagate_stream(TransformedNavState(Ce, x0.tvel, x0.pos), truth.gyro, truth.accel, dt, gravity=g)
        err = right_error if kind == "right" else left_error
        xi0 = se23_log(err(ExtendedPose(Ct[0], vt[0], pt[0]), ExtendedPose(Cs[0], vs[0], ps[0]))).as_vector()
        if kind == "right":
            Phi = expm(_f_right(Ce, x0.tvel, x0.pos, g, wie)[0][:9, :9] * (n * dt))
        else:
            Phi = np.eye(9)
            for k in range(n):
                Phi = expm(_f_left(truth.gyro[k], truth.accel[k])[0][:9, :9] * dt) @ Phi
        xi = Phi @ xi0
        ref = se23_log(err(ExtendedPose(Ct[-1], vt[-1], pt[-1]), ExtendedPose(Cs[-1], vs[-1], ps[-1]))).as_vector()
        return float(np.linalg.norm(xi - ref) / np.linalg.norm(ref))
    s0 = truth.nav(0)
    Ce = so3_exp(Cen.T @ e) @ s0.att
    Ct, vt, pt = propagate_stream(s0, truth.gyro, truth.accel, dt, gravity=g)
    Cs, vs, ps = propagate_stream(NavState(Ce, s0.vel, s0.pos), truth.gyro, truth.accel, dt, gravity=g)
    x = _nav_error(SO, Ct[0], vt[0], pt[0], Cs[0], vs[0], ps[0])
    for k in range(n):
        x = expm(_f_so(Cs[k], truth.accel[k], wie)[0][:9, :9] * dt) @ x
    ref = _nav_error(SO, Ct[-1], vt[-1], pt[-1], Cs[-1], vs[-1], ps[-1])
    return float(np.linalg.norm(x - ref) / np.linalg.norm(ref))


# --------------------------------------------------------------------------
# Lie layer
# --------------------------------------------------------------------------
def lie_roundtrip_error(n: int = 10_000, seed: int = 0) -> tuple[float, float, float]:
    """Max exp/log roundtrip errors on SO(3) and SE_2(3), and max |J J^-1 - I|."""
    rng = np.random.default_rng(seed)
    e_so = e_se = e_j = 0.0
    lim = math.pi - 1e-3
    for _ in range(n):
        d = rng.normal(size=3)
        phi = d / np.linalg.norm(d) * rng.uniform(0.0, lim)
        e_so = max(e_so, float(np.abs(so3_log(so3_exp(phi)) - phi).max()))
        xi = np.concatenate([phi, rng.normal(size=6) * 100.0])
        back = se23_log(se23_exp(Twist.from_vector(xi))).as_vector()
        e_se = max(e_se, float(np.abs(back - xi).max() / max(1.0, np.abs(xi).max())))
        e_j = max(e_j, float(np.abs(_left_jacobian(phi) @ _left_jacobian_inv(phi) - np.eye(3)).max()))
    return e_so, e_se, e_j


# --------------------------------------------------------------------------
# Jacobians by central differences
# --------------------------------------------------------------------------
def _arrays(nav):
    return (nav.att, nav.tvel, nav.pos) if isinstance(nav, TransformedNavState) else (nav.att, nav.vel, nav.pos)


def _make(kind, C, v, p):
    return NavState(C, v, p) if kind == SO else TransformedNavState(C, v, p)


def _derivative(kind, nav, u, g):
    return classic_derivative(nav, u, gravity=g) if kind == SO else transformed_derivative(nav, u, gravity=g)


def _vee_skew(M):
    A = 0.5 * (M - M.T)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def _error_rate(kind, truth, est, u_true, u_est, g):
    """Exact time derivative of the navigation error along both trajectories.

    The rotation part uses ``d/dt log(R) = J_l(phi)^-1 vee(Rdot R^T)``; the
    vector parts are differentiated directly.
    """
    C, v, p = _arrays(truth)
    Ce, ve, pe = _arrays(est)
    dC, dv, dp = _arrays(_derivative(kind, truth, u_true, g))
    dCe, dve, dpe = _arrays(_derivative(kind, est, u_est, g))
    if kind == LEFT:
        R = Ce.T @ C
        Rdot = dCe.T @ C + Ce.T @ dC
    else:
        R = C @ Ce.T
        Rdot = dC @ Ce.T + C @ dCe.T
    phi = so3_log(R)
    phid = _left_jacobian_inv(phi) @ _vee_skew(Rdot @ R.T)
    out = np.empty(9)
    out[0:3] = phid
    if kind == LEFT:
        out[3:6] = dCe.T @ (v - ve) + Ce.T @ (dv - dve)
        out[6:9] = dCe.T @ (p - pe) + Ce.T @ (dp - dpe)
    elif kind == RIGHT:
        out[3:6] = np.cross(dve, phi) + np.cross(ve, phid) - dve + dv
        out[6:9] = np.cross(dpe, phi) + np.cross(pe, phid) - dpe + dp
    else:
        out[3:6] = dve - dv
        out[6:9] = dpe - dp
    return out


def perturbation_scales(est, eps: float = 1e-5) -> np.ndarray:
    """Per-state step: ``eps`` relative to each block's magnitude (at least 1).

    Velocity and position enter every error definition linearly, so a step
    matched to their size avoids rounding against an Earth-radius position
    without adding truncation error.
    """
    _, v, p = _arrays(est)
    s = np.full(15, eps)
    s[3:6] = eps * max(1.0, float(np.linalg.norm(v)))
    s[6:9] = eps * max(1.0, float(np.linalg.norm(p)))
    return s


def numeric_f(kind: int, est, u: ImuSample, g: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """15x15 error-dynamics matrix by central differences of the exact error rate.

    Columns 0-8 perturb the truth through the exact inverse of the error
    definition. Bias columns perturb the true IMU: the estimate is driven by
    the measured sample, the truth by the measured sample minus the bias.
    Gravitation is a common input.
    """
    F = np.zeros((15, 15))
    C, v, p = _arrays(est)
    h = perturbation_scales(est, eps)
    for j in range(15):
        cols = []
        for s in (1.0, -1.0):
            dx = np.zeros(15)
            dx[j] = s * h[j]
            if j < 9:
                truth = _make(kind, *_correct_nav(kind, C, v, p, dx))
                u_t = u
            else:
                truth = est
                u_t = ImuSample(u.t, u.gyro - dx[9:12], u.accel - dx[12:15], u.dt)
            cols.append(_error_rate(kind, truth, est, u_t, u, g))
        F[:9, j] = (cols[0] - cols[1]) / (2.0 * h[j])
    return F


def numeric_h(kind: int, aid: str, est, y_fn, eps: float = 1e-5) -> np.ndarray:
    """Innovation Jacobian by central differences.

    ``y_fn(truth)`` gives the noise-free measurement of a truth state; the
    innovation model is ``z(truth) ~ H dx``.
    """
    C, v, p = _arrays(est)
    wie = WGS84.omega_vec
    h = perturbation_scales(est, eps)
    cols = []
    for j in range(9):
        zs = []
        for s in (1.0, -1.0):
            dx = np.zeros(15)
            dx[j] = s * h[j]
            truth = _make(kind, *_correct_nav(kind, C, v, p, dx))
            zs.append(_innovation(kind, aid, est, y_fn(truth), wie)[1])
        cols.append((zs[0] - zs[1]) / (2.0 * h[j]))
    H = np.zeros((len(cols[0]), 15))
    H[:, :9] = np.column_stack(cols)
    return H


def _innovation(kind, aid, est, y, wie):
    C, v, p = _arrays(est)
    if aid == "gps":
        if kind == SO:
            return _h_gps_so(v, p, y[:3], y[3:])
        if kind == RIGHT:
            return _h_gps_right(v, y)
        return _h_gps_left(C, v, y)
    if kind == RIGHT:
        return _h_odo_right(C, v, p, y, wie)
    if kind == LEFT:
        return _h_odo_left(C, v, p, y, wie)
    return _h_odo_so(C, v, y)


def _gps_y(kind):
    wie = WGS84.omega_vec
    if kind == SO:
        return lambda t: np.concatenate([t.vel, t.pos])
    # transformed velocity of the truth is exactly v + wie x p
    return lambda t: t.tvel.copy()


def _odo_y(kind):
    wie = WGS84.omega_vec
    if kind == SO:
        return lambda t: t.att.T @ t.vel
    return lambda t: t.att.T @ (t.tvel - np.cross(wie, t.pos))


def column_mismatch(A: np.ndarray, B: np.ndarray, rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Largest column gap relative to ``rtol * max(|a|, |b|) + atol`` (pass when < 1)."""
    worst = 0.0
    for j in range(A.shape[1]):
        scale = rtol * max(np.linalg.norm(A[:, j]), np.linalg.norm(B[:, j])) + atol
        worst = max(worst, float(np.linalg.norm(A[:, j] - B[:, j]) / scale))
    return worst


def jacobian_mismatch(n: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst normalized column gap of every F and H over ``n`` random states."""
    rng = np.random.default_rng(seed)
    wie = WGS84.omega_vec
    worst = {k: 0.0 for k in ("F_right", "F_left", "F_so", "H_gps_left", "H_gps_right", "H_gps_so",
                              "H_odo_right", "H_odo_left", "H_odo_so")}
    for _ in range(n):
        x = random_pose(rng)
        u = random_imu(rng)
        g = gravitation(x.pos)
        tr = TransformedNavState(x.rot, x.vel, x.pos)
        cl = NavState(x.rot, x.vel, x.pos)
        for kind, name, nav in ((RIGHT, "right", tr), (LEFT, "left", tr), (SO, "so", cl)):
            if kind == RIGHT:
                Fa = _f_right(nav.att, nav.tvel, nav.pos, g, wie)[0]
            elif kind == LEFT:
                Fa = _f_left(u.gyro, u.accel)[0]
            else:
                Fa = _f_so(nav.att, u.accel, wie)[0]
            Fn = numeric_f(kind, nav, u, g)
            worst[f"F_{name}"] = max(worst[f"F_{name}"], column_mismatch(Fa[:9], Fn[:9]))
            for aid, yf in (("gps", _gps_y(kind)), ("odo", _odo_y(kind))):
                y = yf(nav)
                Ha = _innovation(kind, aid, nav, y, wie)[0]
                Hn = numeric_h(kind, aid, nav, yf)
                key = f"H_{aid}_{name}"
                worst[key] = max(worst[key], column_mismatch(Ha, Hn))
    return worst


def run_all(quick: bool = False) -> list[Check]:
    """All verification checks; ``quick`` shrinks the sample counts."""
    n_pairs = 200 if quick else 1000
    n_lie = 1000 if quick else 10_000
    n_jac = 10 if quick else 100
    checks = [
        _timed("group-affine transformed (max rel)", 1e-9, lambda: group_affine_relative(n_pairs).max()),
        _timed("group-affine classic (min rel)", 1e-3, lambda: group_affine_relative(n_pairs, classic=True).min(),
               below=False),
    ]
    for kind in ("right", "left"):
        checks.append(_timed(f"log-linearity {kind} (max over axes)", 1e-6,
                             lambda k=kind: max(log_linearity_mismatch(k, a) for a in range(3))))
    checks.append(_timed("log-linearity so (min over axes)", 1e-2,
                         lambda: min(log_linearity_mismatch("so", a) for a in range(3)), below=False))
    res = {}

    def lie(i):
        if not res:
            res["v"] = lie_roundtrip_error(n_lie)
        return res["v"][i]

    checks.append(_timed("SO(3) exp/log roundtrip", 1e-9, lambda: lie(0)))
    checks.append(_timed("SE_2(3) exp/log roundtrip", 1e-9, lambda: lie(1)))
    checks.append(_timed("J J^-1 = I", 1e-10, lambda: lie(2)))
    jac = {}

    def jm(key):
        if not jac:
            jac.update(jacobian_mismatch(n_jac))
        return jac[key]

    for key in ("F_right", "F_left", "F_so", "H_gps_left", "H_gps_right", "H_gps_so",
                "H_odo_right", "H_odo_left", "H_odo_so"):
        checks.append(_timed(f"Jacobian {key} (normalized gap)", 1.0, lambda k=key: jm(k)))
    return checks
