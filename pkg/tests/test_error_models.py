"""Error definitions, their feedback inverses, and the F / H Jacobians."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from se23nav.earth import WGS84, gravitation
from se23nav.error_models import (
    NX,
    ErrorState15,
    LinearModel,
    NoiseSpec,
    correct_nav,
    error_state,
    f_left,
    f_right,
    f_so,
    gps_observation,
    h_gps_left,
    h_gps_right,
    h_gps_so,
    h_odo_left,
    h_odo_right,
    h_odo_so,
    kind_code,
)
from se23nav.harness.verify import column_mismatch, numeric_f, numeric_h, random_imu, random_pose
from se23nav.liegroup import ExtendedPose, left_error, right_error, se23_log, so3_exp
from se23nav.mechanization import ImuSample, NavState, TransformedNavState, propagate

seeds = st.integers(0, 2**31 - 1)
W = WGS84.omega_vec


def states(seed):
    rng = np.random.default_rng(seed)
    x = random_pose(rng)
    return rng, TransformedNavState(x.rot, x.vel, x.pos), NavState(x.rot, x.vel, x.pos)


def perturbed(rng, nav, scale=1e-3):
    phi = rng.normal(size=3) * scale
    if isinstance(nav, NavState):
        return NavState(so3_exp(phi) @ nav.att, nav.vel + rng.normal(size=3), nav.pos + rng.normal(size=3) * 10)
    return TransformedNavState(so3_exp(phi) @ nav.att, nav.tvel + rng.normal(size=3), nav.pos + rng.normal(size=3) * 10)


# --------------------------------------------------------------------------
# error definitions
# --------------------------------------------------------------------------
@pytest.mark.parametrize("kind", ["right", "left", "so"])
@given(seed=seeds)
def test_feedback_inverts_error_definition(kind, seed):
    rng, tr, cl = states(seed)
    truth = cl if kind == "so" else tr
    est = perturbed(rng, truth, scale=0.5)
    dx = error_state(truth, est, kind)
    back = correct_nav(est, dx)
    assert np.abs(back.att - truth.att).max() < 1e-12
    v_t = truth.vel if kind == "so" else truth.tvel
    v_b = back.vel if kind == "so" else back.tvel
    assert np.abs(v_b - v_t).max() < 1e-9 * max(1.0, np.abs(v_t).max())
    assert np.abs(back.pos - truth.pos).max() < 1e-8


@pytest.mark.parametrize("kind, err", [("right", right_error), ("left", left_error)])
@given(seed=seeds)
def test_vector_error_matches_group_error_to_second_order(kind, err, seed):
    rng, tr, _ = states(seed)
    est = TransformedNavState(so3_exp(rng.normal(size=3) * 1e-4) @ tr.att, tr.tvel + rng.normal(size=3) * 1e-3,
                              tr.pos + rng.normal(size=3) * 1e-2)
    dx = error_state(tr, est, kind).as_vector()[:9]
    xi = se23_log(err(tr.as_pose(), est.as_pose())).as_vector()
    # the two coordinates agree to first order in the error; the gap is O(|phi| |x|)
    assert np.abs(dx - xi).max() < 1e-3 * max(1.0, np.abs(xi).max())


def test_error_state_type_checks():
    _, tr, cl = states(0)
    with pytest.raises(TypeError):
        error_state(cl, cl, "right")
    with pytest.raises(TypeError):
        error_state(tr, tr, "so")
    with pytest.raises(ValueError):
        kind_code("middle")
    assert kind_code("rse") == kind_code("right")
    with pytest.raises(ValueError):
        ErrorState15.from_vector("left", np.zeros(9))


# --------------------------------------------------------------------------
# F: exact one-step log-linearity (independent of finite differences)
# --------------------------------------------------------------------------
@pytest.mark.parametrize("kind, err", [("right", right_error), ("left", left_error)])
@given(seed=seeds)
def test_invariant_f_propagates_log_error_exactly(kind, err, seed):
    rng, tr, _ = states(seed)
    est = TransformedNavState(so3_exp(rng.normal(size=3) * 0.3) @ tr.att, tr.tvel + rng.normal(size=3),
                              tr.pos + rng.normal(size=3) * 10)
    u = ImuSample(0.0, rng.normal(size=3) * 0.3, rng.normal(size=3) * 3, 0.01)
    g = gravitation(est.pos)
    F = (f_right(est, u, gravity=g) if kind == "right" else f_left(u))[0][:9, :9]
    xi0 = se23_log(err(tr.as_pose(), est.as_pose())).as_vector()
    tr1 = propagate(tr, u, gravity=g)
    est1 = propagate(est, u, gravity=g)
    xi1 = se23_log(err(tr1.as_pose(), est1.as_pose())).as_vector()
    # with gravitation held the log error obeys an exact linear ODE over the step
    pred = expm(F * u.dt) @ xi0
    assert np.abs(pred - xi1).max() < 1e-9 * max(1.0, np.abs(xi1).max())


@pytest.mark.parametrize("kind", ["right", "left", "so"])
def test_noise_enters_like_bias(kind):
    _, tr, cl = states(4)
    u = random_imu(np.random.default_rng(4))
    if kind == "right":
        F, G = f_right(tr, u)
    elif kind == "left":
        F, G = f_left(u)
    else:
        F, G = f_so(cl, u)
    assert F.shape == (NX, NX) and G.shape == (NX, 6)
    assert np.array_equal(F[:9, 9:15], G[:9])
    assert not np.any(F[9:]) and not np.any(G[9:])


# --------------------------------------------------------------------------
# F and H against central differences of the nonlinear models
# --------------------------------------------------------------------------
@pytest.mark.parametrize("kind", [0, 1, 2])
@given(seed=st.integers(0, 10_000))
def test_f_matches_finite_differences(kind, seed):
    rng, tr, cl = states(seed)
    u = random_imu(rng)
    g = gravitation(tr.pos)
    if kind == 0:
        Fa = f_right(tr, u, gravity=g)[0]
        nav = tr
    elif kind == 1:
        Fa = f_left(u)[0]
        nav = tr
    else:
        Fa = f_so(cl, u)[0]
        nav = cl
    Fn = numeric_f(kind, nav, u, g)
    assert column_mismatch(Fa[:9], Fn[:9]) < 1.0


@given(seed=st.integers(0, 10_000))
def test_h_matches_finite_differences(seed):
    _, tr, cl = states(seed)
    y = tr.tvel.copy()
    yb = tr.att.T @ (tr.tvel - np.cross(W, tr.pos))
    cases = [
        (0, "gps", tr, h_gps_right(tr, y)[0], lambda t: t.tvel.copy()),
        (1, "gps", tr, h_gps_left(tr, y)[0], lambda t: t.tvel.copy()),
        (2, "gps", cl, h_gps_so(cl, cl.vel, cl.pos)[0], lambda t: np.concatenate([t.vel, t.pos])),
        (0, "odo", tr, h_odo_right(tr, yb)[0], lambda t: t.att.T @ (t.tvel - np.cross(W, t.pos))),
        (1, "odo", tr, h_odo_left(tr, yb)[0], lambda t: t.att.T @ (t.tvel - np.cross(W, t.pos))),
        (2, "odo", cl, h_odo_so(cl, cl.att.T @ cl.vel)[0], lambda t: t.att.T @ t.vel),
    ]
    for kind, aid, nav, Ha, yf in cases:
        assert column_mismatch(Ha, numeric_h(kind, aid, nav, yf)) < 1.0, (kind, aid)


def test_innovations_vanish_at_truth():
    _, tr, cl = states(8)
    y = gps_observation(cl.vel - np.cross(W, cl.pos), cl.pos)
    assert np.allclose(h_gps_right(tr, y)[1], tr.tvel - y, atol=0)
    vb = tr.att.T @ (tr.tvel - np.cross(W, tr.pos))
    assert np.abs(h_odo_right(tr, vb)[1]).max() < 1e-9
    assert np.abs(h_odo_left(tr, vb)[1]).max() < 1e-9
    assert np.abs(h_gps_left(tr, tr.tvel)[1]).max() == 0.0
    assert np.abs(h_odo_so(cl, cl.att.T @ cl.vel)[1]).max() < 1e-9


# --------------------------------------------------------------------------
# containers
# --------------------------------------------------------------------------
def test_linear_model_validation():
    with pytest.raises(ValueError):
        LinearModel(np.zeros((3, 15)), np.zeros(2), np.eye(3))
    with pytest.raises(ValueError):
        LinearModel(np.zeros((2, 15)), np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    m = LinearModel(np.zeros((1, 15)), 0.0, 1.0)
    assert m.H.shape == (1, 15) and m.R.shape == (1, 1)


def test_noise_spec():
    n = NoiseSpec(1e-5, [1e-4, 2e-4, 3e-4])
    assert np.allclose(n.qc(), [1e-10] * 3 + [1e-8, 4e-8, 9e-8])
    with pytest.raises(ValueError):
        NoiseSpec(-1.0, 0.0)
