"""Error-state Kalman filter engine for the RSE, LSE and SO filters.

The filter keeps a 15-state error mean ``x`` and a square-root factor ``S`` of
the covariance, ``P = S S^T``. Propagation and update are done on ``S`` with
orthogonal triangularization, which is algebraically the same as the usual
covariance recursions but keeps ``P`` positive semidefinite even when its
condition number passes 1e20 (right-invariant position errors carry
``p x phi`` with ``|p|`` near 6.4e6 m). Navigation
errors are fed back into the INS after every update and reset to zero. Bias
states are estimated open loop: they stay in ``x`` and are never applied to
the IMU stream. Between updates ``x`` is propagated with the transition
matrix, so the predicted navigation error includes the effect of the current
bias estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from ._linalg import mm, mmt, mv
from .earth import _A, WGS84, EarthModel, _c_en, _geodetic, _gravitation
from .error_models import (
    LEFT,
    NX,
    RIGHT,
    SO,
    ErrorState15,
    LinearModel,
    NoiseSpec,
    _correct_nav,
    _f_any,
    _h_gps_left,
    _h_gps_right,
    _h_gps_so,
    _h_odo_left,
    _h_odo_right,
    _h_odo_so,
    _nav_error,
    kind_code,
    KIND_NAMES,
)
from .errors import FilterError
from .liegroup import _cross, _skew
from .mechanization import (
    MAX_DT,
    ImuSample,
    NavState,
    TransformedNavState,
    _earth_terms,
    _step_classic_e,
    _step_transformed_e,
    from_transformed,
    to_transformed,
)

AID_GPS, AID_ODO = 0, 1

# a run is declared diverged once the estimate leaves this envelope
DIVERGED_HEIGHT = 1.0e6  # m, | |p| - a |
DIVERGED_SPEED = 1.0e4  # m/s


@dataclass(frozen=True)
class FilterConfig:
    """Filter settings.

    Attitude, velocity and position standard deviations are given about or
    along the local north, east and down axes at the initial position. Bias
    standard deviations are per body axis.
    """

    error_definition: str
    init_attitude_std: NDArray[np.float64]
    init_vel_std: NDArray[np.float64]
    init_pos_std: NDArray[np.float64]
    init_gyro_bias_std: NDArray[np.float64]
    init_accel_bias_std: NDArray[np.float64]
    noise: NoiseSpec
    gps_vel_std: float = 0.1
    gps_pos_std: float = 10.0
    odo_scale_std: float = 0.005
    odo_floor_std: float = 0.01
    odo_nhc_std: float = 0.01
    bias_feedback: bool = False

    def __post_init__(self) -> None:
        kind_code(self.error_definition)
        for name in ("init_attitude_std", "init_vel_std", "init_pos_std", "init_gyro_bias_std", "init_accel_bias_std"):
            a = np.ascontiguousarray(np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (3,)))
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"FilterConfig.{name} must be finite and nonnegative")
            object.__setattr__(self, name, a)
        for name in ("gps_vel_std", "gps_pos_std", "odo_scale_std", "odo_floor_std", "odo_nhc_std"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"FilterConfig.{name} must be nonnegative")
        if self.bias_feedback:
            raise ValueError("closed-loop bias feedback is not supported; biases are estimated open loop")

    @property
    def kind(self) -> int:
        return kind_code(self.error_definition)

    def rparams(self) -> NDArray[np.float64]:
        return np.array([self.gps_vel_std, self.gps_pos_std, self.odo_scale_std, self.odo_floor_std, self.odo_nhc_std])


@dataclass(frozen=True)
class FilterState:
    """Filter estimate at time ``t``.

    ``nav`` is a TransformedNavState for right/left and a NavState for SO.
    ``x`` holds the error mean; its bias part is the open-loop bias estimate.
    """

    kind: str
    nav: TransformedNavState | NavState
    S: NDArray[np.float64]
    x: NDArray[np.float64] = field(default_factory=lambda: np.zeros(NX))
    t: float = 0.0

    @property
    def P(self) -> NDArray[np.float64]:
        """Error covariance ``S S^T``."""
        return mmt(self.S, self.S)

    @property
    def bias_estimate(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return self.x[9:12].copy(), self.x[12:15].copy()

    def nav_classic(self, em: EarthModel = WGS84) -> NavState:
        if isinstance(self.nav, NavState):
            return self.nav
        return from_transformed(self.nav, em)


# --------------------------------------------------------------------------
# initial covariance
# --------------------------------------------------------------------------
@njit
def _put_local(L, blk, Cne, std):
    # C_n^e diag(std), a square root of C_n^e diag(std^2) C_e^n
    for i in range(3):
        for k in range(3):
            L[blk + i, blk + k] = Cne[i, k] * std[k]


@njit
def _init_sqrt(kind, C, vb, p, att_std, vel_std, pos_std, bg_std, ba_std, wie, params):
    """Covariance square root of the chosen error definition from local-frame stds.

    The classic error (phi_e = log(C Ce^T), dv = ve - v, dp = pe - p) is
    assembled in ECEF first, then mapped with the definition's linear transform.
    """
    lat, lon, _, _ = _geodetic(p, params)
    Cne = _c_en(lat, lon).T
    L0 = np.zeros((NX, NX))
    _put_local(L0, 0, Cne, att_std)
    _put_local(L0, 3, Cne, vel_std)
    _put_local(L0, 6, Cne, pos_std)
    for i in range(3):
        L0[9 + i, 9 + i] = bg_std[i]
        L0[12 + i, 12 + i] = ba_std[i]
    if kind == SO:
        return L0
    T = np.eye(NX)
    W = _skew(wie)
    if kind == RIGHT:
        V = _skew(vb)
        Px = _skew(p)
        for i in range(3):
            for j in range(3):
                T[3 + i, j] = V[i, j]
                T[3 + i, 3 + j] = -1.0 if i == j else 0.0
                T[3 + i, 6 + j] = -W[i, j]
                T[6 + i, j] = Px[i, j]
                T[6 + i, 6 + j] = -1.0 if i == j else 0.0
    else:
        Ct = C.T.copy()
        CtW = mm(Ct, W)
        for i in range(3):
            for j in range(3):
                # left attitude error lives in the body frame
                T[i, j] = Ct[i, j]
                T[3 + i, 3 + j] = -Ct[i, j]
                T[3 + i, 6 + j] = -CtW[i, j]
                T[6 + i, 6 + j] = -Ct[i, j]
    return mm(T, L0)


def init_sqrt_covariance(
    cfg: FilterConfig, nav0: TransformedNavState | NavState, em: EarthModel = WGS84
) -> NDArray[np.float64]:
    """Square root ``S0`` of the initial covariance, ``P0 = S0 S0^T``.

    ``nav0`` is the initial estimate, classic or transformed.
    """
    code = cfg.kind
    if isinstance(nav0, NavState):
        vb = nav0.vel + np.cross(em.omega_vec, nav0.pos)
    else:
        vb = nav0.tvel
    return _init_sqrt(
        code,
        nav0.att,
        np.ascontiguousarray(vb),
        nav0.pos,
        cfg.init_attitude_std,
        cfg.init_vel_std,
        cfg.init_pos_std,
        cfg.init_gyro_bias_std,
        cfg.init_accel_bias_std,
        em.omega_vec,
        em.params,
    )


def init_covariance(cfg: FilterConfig, nav0: TransformedNavState | NavState, em: EarthModel = WGS84) -> NDArray:
    """Initial 15x15 covariance for the configured error definition."""
    S = init_sqrt_covariance(cfg, nav0, em)
    return mmt(S, S)


def init_filter(cfg: FilterConfig, nav0: NavState, t0: float = 0.0, em: EarthModel = WGS84) -> FilterState:
    """Filter state from a classic initial estimate."""
    S = init_sqrt_covariance(cfg, nav0, em)
    nav = nav0 if cfg.kind == SO else to_transformed(nav0, em)
    return FilterState(cfg.error_definition, nav, S, np.zeros(NX), float(t0))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------
@njit
def _triangularize(A):
    """Lower-triangular ``L`` (n x n) with ``L L^T = A A^T`` for ``A`` (n x k), k >= n.

    Householder reflections applied from the right (an LQ factorization
    without forming Q).
    """
    n, k = A.shape
    W = A.copy()
    u = np.empty(k)
    for i in range(n):
        tail = 0.0
        for c in range(i + 1, k):
            tail += W[i, c] * W[i, c]
        if tail == 0.0:
            # row already triangular
            continue
        norm2 = tail + W[i, i] * W[i, i]
        alpha = -math.sqrt(norm2) if W[i, i] >= 0.0 else math.sqrt(norm2)
        for c in range(i, k):
            u[c] = W[i, c]
        u[i] -= alpha
        uu = norm2 - 2.0 * alpha * W[i, i] + alpha * alpha
        if uu == 0.0:
            continue
        for r in range(i, n):
            acc = 0.0
            for c in range(i, k):
                acc += W[r, c] * u[c]
            f = 2.0 * acc / uu
            for c in range(i, k):
                W[r, c] -= f * u[c]
    L = np.zeros((n, n))
    for r in range(n):
        for c in range(r + 1):
            L[r, c] = W[r, c]
    return L


# row order used when re-triangularizing the propagated factor: biases first
_BIAS_FIRST = np.array([9, 10, 11, 12, 13, 14, 0, 1, 2, 3, 4, 5, 6, 7, 8])


@njit
def _cov_step(S, x, F, G, qc, dt):
    """Square-root covariance and mean over one step, second-order transition.

    The returned factor is lower triangular with the bias states ordered
    first. Biases have no dynamics and no process noise, so their rows of
    ``[Phi S, G sqrt(q dt)]`` equal their rows of ``S`` and stay triangular
    from one step to the next; only the nine navigation rows are reduced.
    """
    Fd = F * dt
    Phi = Fd + 0.5 * mm(Fd, Fd)
    for i in range(NX):
        Phi[i, i] += 1.0
    nq = G.shape[1]
    sq = np.sqrt(qc * dt)
    PS = mm(Phi, S)
    A = np.empty((NX, NX + nq))
    for r in range(NX):
        src = _BIAS_FIRST[r]
        for c in range(NX):
            A[r, c] = PS[src, c]
        for j in range(nq):
            A[r, NX + j] = G[src, j] * sq[j]
    L = _triangularize(A)
    Sn = np.empty((NX, NX))
    for r in range(NX):
        for c in range(NX):
            Sn[_BIAS_FIRST[r], c] = L[r, c]
    return Sn, mv(Phi, x)


@njit
def _cholesky(S):
    """Lower Cholesky factor and a success flag (no exception on failure)."""
    m = S.shape[0]
    L = np.zeros((m, m))
    for j in range(m):
        d = S[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > 0.0:
            return L, False
        L[j, j] = math.sqrt(d)
        for i in range(j + 1, m):
            acc = S[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    return L, True


@njit
def _chol_solve(L, B):
    """Solve (L L^T) X = B column by column."""
    m, n = B.shape
    X = np.empty((m, n))
    y = np.empty(m)
    for c in range(n):
        for i in range(m):
            acc = B[i, c]
            for k in range(i):
                acc -= L[i, k] * y[k]
            y[i] = acc / L[i, i]
        for i in range(m - 1, -1, -1):
            acc = y[i]
            for k in range(i + 1, m):
                acc -= L[k, i] * X[k, c]
            X[i, c] = acc / L[i, i]
    return X


@njit
def _update(S, x, H, z, R):
    """Square-root Kalman update; returns (S+, x+, ok).

    Triangularizes ``[[chol(R), H S], [0, S]]`` to ``[[Sz, 0], [Kb, S+]]`` so
    that ``Sz Sz^T = H P H^T + R``, ``K = Kb Sz^-1`` and
    ``S+ S+^T = (I - K H) P (I - K H)^T + K R K^T``.
    """
    m = H.shape[0]
    Rs = 0.5 * (R + R.T)
    sR, ok = _cholesky(Rs)
    if not ok:
        return S, x, False
    HS = mm(H, S)
    if not (np.all(np.isfinite(HS)) and np.all(np.isfinite(S))):
        return S, x, False
    A = np.zeros((m + NX, m + NX))
    A[:m, :m] = sR
    A[:m, m:] = HS
    A[m:, m:] = S
    L = _triangularize(A)
    Sz = L[:m, :m]
    for i in range(m):
        if not abs(Sz[i, i]) > 0.0:
            return S, x, False
    # innovation scaled by Sz^-1 (forward substitution), then x+ = x + Kb e
    r = z - mv(H, x)
    e = np.empty(m)
    for i in range(m):
        acc = r[i]
        for k in range(i):
            acc -= Sz[i, k] * e[k]
        e[i] = acc / Sz[i, i]
    xn = x + mv(L[m:, :m].copy(), e)
    return L[m:, m:].copy(), xn, True


@njit
def _measurement(kind, aid, C, v, p, meas, rpar, wie):
    """Innovation, H and R for one aiding record (filter coordinates)."""
    if aid == AID_GPS:
        vg = meas[0:3].copy()
        pg = meas[3:6].copy()
        sv2 = rpar[0] * rpar[0]
        sp2 = rpar[1] * rpar[1]
        if kind == SO:
            H, z = _h_gps_so(v, p, vg, pg)
            R = np.zeros((6, 6))
            for i in range(3):
                R[i, i] = sv2
                R[3 + i, 3 + i] = sp2
            return H, z, R
        y = vg + _cross(wie, pg)
        W = _skew(wie)
        Ry = mmt(W, W) * sp2
        for i in range(3):
            Ry[i, i] += sv2
        if kind == RIGHT:
            H, z = _h_gps_right(v, y)
            return H, z, Ry
        H, z = _h_gps_left(C, v, y)
        return H, z, mm(C.T, mm(Ry, C))
    vb = np.zeros(3)
    vb[0] = meas[0]
    sf = max(rpar[2] * abs(meas[0]), rpar[3])
    Rb = np.zeros((3, 3))
    Rb[0, 0] = sf * sf
    Rb[1, 1] = rpar[4] * rpar[4]
    Rb[2, 2] = rpar[4] * rpar[4]
    R = mmt(mm(C, Rb), C)
    if kind == RIGHT:
        H, z = _h_odo_right(C, v, p, vb, wie)
    elif kind == LEFT:
        H, z = _h_odo_left(C, v, p, vb, wie)
    else:
        H, z = _h_odo_so(C, v, vb)
    return H, z, R


@njit
def _roundtrip(kind, C, v, p, Cn, vn, pn):
    """Relative state gap after re-deriving the applied error and re-applying it.

    Compared on the state so that corrections beyond pi (where the rotation
    log wraps) are still checked exactly.
    """
    back = np.zeros(NX)
    back[:9] = _nav_error(kind, Cn, vn, pn, C, v, p)
    Cb, vb, pb = _correct_nav(kind, C, v, p, back)
    # velocity and position gaps relative to the size of the correction
    vs = max(1.0, math.sqrt((vn[0] - v[0]) ** 2 + (vn[1] - v[1]) ** 2 + (vn[2] - v[2]) ** 2))
    ps = max(1.0, math.sqrt((pn[0] - p[0]) ** 2 + (pn[1] - p[1]) ** 2 + (pn[2] - p[2]) ** 2))
    res = 0.0
    for i in range(3):
        res = max(res, abs(vb[i] - vn[i]) / vs, abs(pb[i] - pn[i]) / ps)
        for j in range(3):
            res = max(res, abs(Cb[i, j] - Cn[i, j]))
    return res


@njit
def _nav_sane(C, v, p, S, params):
    """False once the estimate is non-finite or physically meaningless."""
    if not (np.all(np.isfinite(C)) and np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
        return False
    if not np.all(np.isfinite(S)):
        return False
    r = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    s = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return abs(r - params[_A]) < DIVERGED_HEIGHT and s < DIVERGED_SPEED


@njit
def _hygiene(S):
    """(min eigenvalue / trace, max |P - P^T| / max |P|) of ``P = S S^T``."""
    P = mmt(S, S)
    tr = 0.0
    for i in range(NX):
        tr += P[i, i]
    ev = np.linalg.eigvalsh(P)
    amax = np.max(np.abs(P))
    asym = np.max(np.abs(P - P.T))
    return ev[0] / tr, asym / amax if amax > 0 else 0.0


@njit
def _run_filter(kind, aid, gyro, accel, dts, upd_epoch, meas, out_epoch,
                C, v, p, x, S, qc, rpar, wie, params, check):
    n = dts.shape[0]
    K = out_epoch.shape[0]
    out_C = np.empty((K, 3, 3))
    out_v = np.empty((K, 3))
    out_p = np.empty((K, 3))
    out_x = np.empty((K, NX))
    out_Pd = np.empty((K, NX))
    # [min eig ratio, max asym, max roundtrip residual, updates, failures,
    #  max |phi| applied, epoch of divergence or -1]
    stats = np.zeros(7)
    stats[0] = np.inf
    stats[6] = -1.0
    iu = 0
    io = 0
    m = upd_epoch.shape[0]
    dt_prev = -1.0
    Re, Je, Ne = _earth_terms(wie, 0.0)
    for j in range(n + 1):
        if (iu < m and upd_epoch[iu] == j) or (io < K and out_epoch[io] == j):
            if not _nav_sane(C, v, p, S, params):
                stats[6] = j
                break
        while iu < m and upd_epoch[iu] == j:
            H, z, R = _measurement(kind, aid, C, v, p, meas[iu], rpar, wie)
            Sn, xn, ok = _update(S, x, H, z, R)
            iu += 1
            if not ok:
                stats[4] += 1.0
                continue
            S = Sn
            Cn, vn, pn = _correct_nav(kind, C, v, p, xn)
            if check:
                stats[2] = max(stats[2], _roundtrip(kind, C, v, p, Cn, vn, pn))
                r0, a0 = _hygiene(S)
                stats[0] = min(stats[0], r0)
                stats[1] = max(stats[1], a0)
            ang = math.sqrt(xn[0] ** 2 + xn[1] ** 2 + xn[2] ** 2)
            stats[5] = max(stats[5], ang)
            C, v, p = Cn, vn, pn
            x = xn.copy()
            for i in range(9):
                x[i] = 0.0
            stats[3] += 1.0
        while io < K and out_epoch[io] == j:
            out_C[io] = C
            out_v[io] = v
            out_p[io] = p
            out_x[io] = x
            for i in range(NX):
                acc = 0.0
                for k in range(NX):
                    acc += S[i, k] * S[i, k]
                out_Pd[io, i] = acc
            if check:
                r0, a0 = _hygiene(S)
                stats[0] = min(stats[0], r0)
                stats[1] = max(stats[1], a0)
            io += 1
        if j == n:
            break
        dt = dts[j]
        if dt != dt_prev:
            Re, Je, Ne = _earth_terms(wie, dt)
            dt_prev = dt
        g = _gravitation(p, params)
        F, G = _f_any(kind, C, v, p, gyro[j], accel[j], g, wie)
        S, x = _cov_step(S, x, F, G, qc, dt)
        if kind == SO:
            C, v, p = _step_classic_e(C, v, p, gyro[j], accel[j], dt, g, wie, Re)
        else:
            C, v, p = _step_transformed_e(C, v, p, gyro[j], accel[j], dt, g, Re, Je, Ne)
    # epochs after a divergence carry no estimate
    out_C[io:] = np.nan
    out_v[io:] = np.nan
    out_p[io:] = np.nan
    out_x[io:] = np.nan
    out_Pd[io:] = np.nan
    return out_C, out_v, out_p, out_x, out_Pd, stats


# --------------------------------------------------------------------------
# step-wise public API
# --------------------------------------------------------------------------
def _nav_arrays(nav):
    if isinstance(nav, TransformedNavState):
        return nav.att, nav.tvel, nav.pos
    return nav.att, nav.vel, nav.pos


def _make_nav(code, C, v, p):
    return NavState(C, v, p) if code == SO else TransformedNavState(C, v, p)


def propagate_filter(st: FilterState, u: ImuSample, cfg: FilterConfig, em: EarthModel = WGS84) -> FilterState:
    """Propagate navigation, error mean and covariance over one IMU sample."""
    if not 0 < u.dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}] s, got {u.dt}")
    code = kind_code(st.kind)
    C, v, p = _nav_arrays(st.nav)
    wie = em.omega_vec
    g = _gravitation(p, em.params)
    F, G = _f_any(code, C, v, p, u.gyro, u.accel, g, wie)
    S, x = _cov_step(st.S, st.x, F, G, cfg.noise.qc(), float(u.dt))
    Re, Je, Ne = _earth_terms(wie, float(u.dt))
    if code == SO:
        C, v, p = _step_classic_e(C, v, p, u.gyro, u.accel, float(u.dt), g, wie, Re)
    else:
        C, v, p = _step_transformed_e(C, v, p, u.gyro, u.accel, float(u.dt), g, Re, Je, Ne)
    return FilterState(st.kind, _make_nav(code, C, v, p), S, x, st.t + float(u.dt))


def update_filter(st: FilterState, model: LinearModel) -> tuple[FilterState, ErrorState15]:
    """Kalman update in square-root form.

    Returns the updated state (navigation not yet corrected) and the error
    estimate ``dx = x + K (z - H x)`` to be fed back.

    Raises
    ------
    FilterError
        If the innovation covariance is not positive definite.
    """
    S, x, ok = _update(np.ascontiguousarray(st.S), np.ascontiguousarray(st.x), model.H, model.z, model.R)
    if not ok:
        raise FilterError("innovation covariance not positive definite")
    dx = ErrorState15.from_vector(KIND_NAMES[kind_code(st.kind)], x)
    return replace(st, S=S, x=x), dx


def feedback(st: FilterState, dx: ErrorState15, cfg: FilterConfig | None = None) -> FilterState:
    """Apply the navigation part of ``dx`` and reset it; keep bias estimates.

    The covariance is left unchanged.
    """
    code = kind_code(st.kind)
    if kind_code(dx.kind) != code:
        raise ValueError(f"error state of kind {dx.kind!r} cannot correct a {st.kind!r} filter")
    vec = dx.as_vector()
    C, v, p = _correct_nav(code, *_nav_arrays(st.nav), vec)
    x = vec.copy()
    x[:9] = 0.0
    return FilterState(st.kind, _make_nav(code, C, v, p), st.S, x, st.t)


def measurement_model(
    st: FilterState, aid: str, meas: ArrayLike, cfg: FilterConfig, em: EarthModel = WGS84
) -> LinearModel:
    """Build the LinearModel for a GPS ``[v_e, p_e]`` or odometer ``[v_fwd]`` record."""
    code = kind_code(st.kind)
    a = {"gps": AID_GPS, "odometer": AID_ODO, "odo": AID_ODO}[aid]
    row = np.zeros(6)
    m = np.atleast_1d(np.asarray(meas, dtype=np.float64))
    row[: m.shape[0]] = m
    H, z, R = _measurement(code, a, *_nav_arrays(st.nav), row, cfg.rparams(), em.omega_vec)
    return LinearModel(H, z, R)


# --------------------------------------------------------------------------
# batch driver
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class FilterRun:
    """Filter output at the requested epochs (classic navigation)."""

    kind: str
    epochs: NDArray[np.int64]
    att: NDArray[np.float64]
    vel: NDArray[np.float64]
    pos: NDArray[np.float64]
    x: NDArray[np.float64]
    P_diag: NDArray[np.float64]
    min_eig_ratio: float
    max_asymmetry: float
    max_roundtrip: float
    updates: int
    failed_updates: int
    max_correction_angle: float
    diverged_epoch: int = -1

    @property
    def diverged(self) -> bool:
        return self.diverged_epoch >= 0


def run_filter(
    cfg: FilterConfig,
    nav0: NavState,
    gyro: ArrayLike,
    accel: ArrayLike,
    dts: ArrayLike,
    aid: str,
    upd_epoch: ArrayLike,
    meas: ArrayLike,
    out_epoch: ArrayLike,
    em: EarthModel = WGS84,
    check: bool = True,
) -> FilterRun:
    """Run one filter over an IMU stream with aiding.

    Epoch ``j`` is the time after ``j`` IMU samples. Updates listed at epoch
    ``j`` are applied before outputs at ``j`` are recorded and before sample
    ``j`` is propagated.

    A run whose estimate leaves the envelope set by ``DIVERGED_HEIGHT`` and
    ``DIVERGED_SPEED`` (or turns non-finite) is stopped there:
    ``diverged_epoch`` records the epoch and later outputs are NaN.
    """
    code = cfg.kind
    a = {"gps": AID_GPS, "odometer": AID_ODO, "odo": AID_ODO}[aid]
    st = init_filter(cfg, nav0, 0.0, em)
    C, v, p = _nav_arrays(st.nav)
    gyro = np.ascontiguousarray(gyro, dtype=np.float64)
    accel = np.ascontiguousarray(accel, dtype=np.float64)
    dts = np.ascontiguousarray(dts, dtype=np.float64)
    if np.any(dts <= 0) or np.any(dts > MAX_DT):
        raise ValueError(f"IMU dt must be in (0, {MAX_DT}] s")
    upd = np.ascontiguousarray(upd_epoch, dtype=np.int64)
    out = np.ascontiguousarray(out_epoch, dtype=np.int64)
    if np.any(np.diff(upd) < 0) or np.any(np.diff(out) < 0):
        raise ValueError("epoch indices must be sorted")
    meas = np.ascontiguousarray(np.atleast_2d(meas), dtype=np.float64)
    if meas.shape[0] != upd.shape[0]:
        raise ValueError("one measurement row per update epoch is required")
    if meas.shape[1] < 6:
        meas = np.ascontiguousarray(np.pad(meas, ((0, 0), (0, 6 - meas.shape[1]))))
    try:
        Cs, vs, ps, xs, Pd, stats = _run_filter(
            code, a, gyro, accel, dts, upd, meas, out,
            C, v, p, st.x, st.S, cfg.noise.qc(), cfg.rparams(), em.omega_vec, em.params, check,
        )
    except np.linalg.LinAlgError as exc:
        raise FilterError(f"covariance became non-finite: {exc}") from exc
    if stats[4] > 0:
        raise FilterError(f"{int(stats[4])} updates failed: innovation covariance not positive definite")
    if code != SO:
        vs = vs - np.cross(em.omega_vec, ps)
    return FilterRun(
        KIND_NAMES[code], out, Cs, vs, ps, xs, Pd,
        float(stats[0]), float(stats[1]), float(stats[2]), int(stats[3]), int(stats[4]), float(stats[5]),
        int(stats[6]),
    )
