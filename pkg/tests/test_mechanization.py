"""ECEF mechanizations: exact transformed step and second-order classic step."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from se23nav.earth import WGS84, Geodetic, gravitation, geodetic_to_ecef
from se23nav.liegroup import ExtendedPose, skew, so3_exp
from se23nav.mechanization import (
    ImuSample,
    NavState,
    TransformedNavState,
    classic_derivative,
    from_transformed,
    group_affine_residual,
    group_dynamics,
    propagate,
    propagate_classic,
    propagate_stream,
    to_transformed,
    transformed_derivative,
)
from se23nav.simulator import generate_truth, static_profile

W = skew(WGS84.omega_vec)
seeds = st.integers(0, 2**31 - 1)


def random_state(rng):
    g = Geodetic.from_degrees(rng.uniform(-80, 80), rng.uniform(-180, 180), rng.uniform(0, 5000))
    p = geodetic_to_ecef(g)
    return NavState(so3_exp(rng.normal(size=3)), rng.normal(size=3) * 100.0, p)


def random_imu(rng, dt=0.01):
    return ImuSample(0.0, rng.normal(size=3) * 0.3, rng.normal(size=3) * 3.0 + [0, 0, -9.8], dt)


def flow_oracle(x: TransformedNavState, u: ImuSample, g: np.ndarray) -> TransformedNavState:
    """X+ = expm(E dt) X expm(B dt) for dX/dt = E X + X B (inputs held)."""
    B = np.zeros((5, 5))
    B[:3, :3] = skew(u.gyro)
    B[:3, 3] = u.accel
    B[3, 4] = 1.0
    E = np.zeros((5, 5))
    E[:3, :3] = -W
    E[:3, 3] = g
    E[3, 4] = -1.0
    M = expm(E * u.dt) @ x.as_pose().matrix() @ expm(B * u.dt)
    return TransformedNavState.from_pose(ExtendedPose.from_matrix(_bottom(M)))


def _bottom(M):
    out = M.copy()
    out[3:] = np.eye(5)[3:]
    return out


def rk_reference(s: NavState, u: ImuSample, g: np.ndarray) -> NavState:
    """Classic ODE integrated by an adaptive high-order solver (gravitation held)."""

    def rhs(_, y):
        C = y[:9].reshape(3, 3)
        d = classic_derivative(NavState(C, y[9:12], y[12:15]), u, gravity=g)
        return np.concatenate([d.att.ravel(), d.vel, d.pos])

    y0 = np.concatenate([s.att.ravel(), s.vel, s.pos])
    sol = solve_ivp(rhs, (0.0, u.dt), y0, method="DOP853", rtol=1e-13, atol=1e-10)
    y = sol.y[:, -1]
    return NavState(y[:9].reshape(3, 3), y[9:12], y[12:15])


@given(seeds)
def test_transformed_step_is_the_exact_flow(seed):
    rng = np.random.default_rng(seed)
    x = to_transformed(random_state(rng))
    u = random_imu(rng, dt=rng.uniform(0.001, 0.1))
    g = gravitation(x.pos)
    got = propagate(x, u, gravity=g)
    ref = flow_oracle(x, u, g)
    assert np.abs(got.att - ref.att).max() < 1e-13
    assert np.abs(got.tvel - ref.tvel).max() < 1e-9
    assert np.abs(got.pos - ref.pos).max() < 1e-7


def test_transformed_and_classic_agree_with_ode_solver():
    rng = np.random.default_rng(7)
    for _ in range(5):
        s = random_state(rng)
        u = random_imu(rng)
        g = gravitation(s.pos)
        ref = rk_reference(s, u, g)
        exact = from_transformed(propagate(to_transformed(s), u, gravity=g))
        assert np.abs(exact.vel - ref.vel).max() < 1e-8
        assert np.abs(exact.pos - ref.pos).max() < 1e-7
        classic = propagate_classic(s, u, gravity=g)
        assert np.abs(classic.att - ref.att).max() < 1e-9
        assert np.abs(classic.vel - ref.vel).max() < 1e-5
        assert np.abs(classic.pos - ref.pos).max() < 1e-6


def test_classic_step_is_second_order():
    rng = np.random.default_rng(11)
    s = random_state(rng)
    errs = []
    for dt in (0.04, 0.02, 0.01):
        u = random_imu(np.random.default_rng(3), dt=dt)
        g = gravitation(s.pos)
        ref = rk_reference(s, u, g)
        errs.append(np.abs(propagate_classic(s, u, gravity=g).vel - ref.vel).max())
    # local error O(dt^3)
    assert errs[0] / errs[1] > 6.0 and errs[1] / errs[2] > 6.0


def test_derivatives_are_consistent():
    rng = np.random.default_rng(5)
    s = random_state(rng)
    u = random_imu(rng)
    g = gravitation(s.pos)
    dc = classic_derivative(s, u, gravity=g)
    dt = transformed_derivative(to_transformed(s), u, gravity=g)
    assert np.allclose(dc.att, dt.att, atol=0)
    # vbar = v + W p  =>  d(vbar) = dv + W dp
    assert np.allclose(dt.tvel, dc.vel + W @ dc.pos, rtol=0, atol=1e-10)
    assert np.allclose(dt.pos, dc.pos, rtol=0, atol=1e-9)


def test_transform_commutes_with_propagation():
    rng = np.random.default_rng(9)
    for _ in range(10):
        s = random_state(rng)
        u = random_imu(rng)
        g = gravitation(s.pos)
        a = to_transformed(propagate_classic(s, u, gravity=g))
        b = propagate(to_transformed(s), u, gravity=g)
        assert np.abs(a.pos - b.pos).max() < 1e-6
        assert np.abs(a.tvel - b.tvel).max() < 1e-8


def test_transform_roundtrip():
    rng = np.random.default_rng(1)
    s = random_state(rng)
    back = from_transformed(to_transformed(s))
    assert np.allclose(back.vel, s.vel, rtol=0, atol=1e-12)


@given(seeds)
def test_group_affine_property(seed):
    rng = np.random.default_rng(seed)
    a = to_transformed(random_state(rng)).as_pose()
    b = to_transformed(random_state(rng)).as_pose()
    u = random_imu(rng)
    g = gravitation(a.pos)
    prod = ExtendedPose.from_matrix(_bottom(a.matrix() @ b.matrix()))
    scale = np.linalg.norm(group_dynamics(prod, u, gravity=g))
    assert group_affine_residual(a, b, u, gravity=g) / scale < 1e-9
    assert group_affine_residual(a, b, u, gravity=g, classic=True) / scale > 1e-6


def test_static_truth_stays_put():
    truth = generate_truth(static_profile(300.0), Geodetic.from_degrees(30.5, 114.3, 20.0), 0.01)
    x0 = to_transformed(truth.nav(0))
    C, v, p = propagate_stream(x0, truth.gyro, truth.accel, 0.01)
    assert np.abs(p - p[0]).max() < 1e-3
    assert np.abs(C[-1] - truth.att[-1]).max() < 1e-12


def test_stream_matches_single_steps():
    rng = np.random.default_rng(2)
    x = to_transformed(random_state(rng))
    us = [random_imu(rng) for _ in range(20)]
    gy = np.array([u.gyro for u in us])
    ac = np.array([u.accel for u in us])
    C, v, p = propagate_stream(x, gy, ac, 0.01)
    s = x
    for u in us:
        s = propagate(s, u)
    assert np.allclose(C[-1], s.att, rtol=0, atol=1e-14)
    assert np.allclose(p[-1], s.pos, rtol=0, atol=1e-8)


def test_dt_validation():
    rng = np.random.default_rng(0)
    x = to_transformed(random_state(rng))
    with pytest.raises(ValueError):
        propagate(x, ImuSample(0.0, np.zeros(3), np.zeros(3), 0.5))
    with pytest.raises(ValueError):
        ImuSample(0.0, np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        propagate_stream(x, np.zeros((3, 3)), np.zeros((3, 3)), -0.01)
