"""SO(3) and SE_2(3) algebra.

An extended pose bundles an attitude ``C``, a velocity ``v`` and a position
``p`` into the 5x5 matrix::

    [[C, v, p],
     [0, 1, 0],
     [0, 0, 1]]

Twists are 9-vectors ``[phi, nu, rho]`` of the Lie algebra. The array level
kernels (leading underscore) are numba compiled and used by the propagation
and filter loops; the public functions wrap them with validation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from ._linalg import mm, mmt, mv
from .errors import AmbiguousRotationWarning, DomainError

SMALL_ANGLE = 1e-6
NEAR_PI = 1e-6
ORTHO_TOL = 1e-9
JINV_LIMIT = 2.0 * math.pi - 1e-3


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------
@njit
def _skew(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@njit
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit
def _norm3(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


@njit
def _series3(phi, c0, a, b):
    """c0 I + a K + b K^2 with K = phi^ and K^2 = phi phi^T - |phi|^2 I."""
    t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = b * phi[i] * phi[j]
        out[i, i] += c0 - b * t2
    out[0, 1] -= a * phi[2]
    out[0, 2] += a * phi[1]
    out[1, 0] += a * phi[2]
    out[1, 2] -= a * phi[0]
    out[2, 0] -= a * phi[1]
    out[2, 1] += a * phi[0]
    return out


@njit
def _so3_exp(phi):
    # I + sin(t)/t K + (1 - cos t)/t^2 K^2, with 1 - cos t = 2 sin^2(t/2)
    theta = _norm3(phi)
    if theta < SMALL_ANGLE:
        return _series3(phi, 1.0, 1.0, 0.5)
    s = math.sin(0.5 * theta) / theta
    return _series3(phi, 1.0, math.sin(theta) / theta, 2.0 * s * s)


@njit
def _so3_log(R):
    """Return (phi, near_pi)."""
    w = np.empty(3)
    w[0] = R[2, 1] - R[1, 2]
    w[1] = R[0, 2] - R[2, 0]
    w[2] = R[1, 0] - R[0, 1]
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    s = 0.5 * _norm3(w)
    theta = math.atan2(s, c)
    if theta < SMALL_ANGLE:
        # theta / (2 sin theta) ~ (1 + theta^2 / 6) / 2
        return 0.5 * (1.0 + theta * theta / 6.0) * w, False
    if math.pi - theta > NEAR_PI:
        return (0.5 * theta / math.sin(theta)) * w, False
    # near pi: axis from the symmetric part, B = (1 - cos t) a a^T
    B = 0.5 * (R + R.T)
    for i in range(3):
        B[i, i] -= c
    k = 0
    for i in range(1, 3):
        if B[i, i] > B[k, k]:
            k = i
    a = B[:, k] / math.sqrt(max(B[k, k], 1e-300) * (1.0 - c))
    a = a / _norm3(a)
    d = a[0] * w[0] + a[1] * w[1] + a[2] * w[2]
    if abs(d) > 1e-12:
        if d < 0.0:
            a = -a
    else:
        m = 0
        for i in range(1, 3):
            if abs(a[i]) > abs(a[m]):
                m = i
        if a[m] < 0.0:
            a = -a
    return theta * a, True


# below this angle the cancelling coefficients are summed as Taylor series
# (truncation under 3e-16 relative)
SERIES_ANGLE = 0.1


@njit
def _c_sin3(theta):
    """(t - sin t) / t^3."""
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 / 362880.0))
    return (theta - math.sin(theta)) / theta**3


@njit
def _c_cos4(theta):
    """(t^2 / 2 - 1 + cos t) / t^4."""
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 24.0 - t2 * (1.0 / 720.0 - t2 * (1.0 / 40320.0 - t2 / 3628800.0))
    s = math.sin(0.5 * theta)
    t2 = theta * theta
    return (0.5 * t2 - 2.0 * s * s) / (t2 * t2)


@njit
def _c_cot2(theta):
    """(1 - (t/2) cot(t/2)) / t^2."""
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 * (1.0 / 720.0 + t2 * (1.0 / 30240.0 + t2 / 1209600.0))
    half = 0.5 * theta
    return (1.0 - half / math.tan(half)) / (theta * theta)


@njit
def _left_jacobian(phi):
    theta = _norm3(phi)
    if theta < SMALL_ANGLE:
        return _series3(phi, 1.0, 0.5, 1.0 / 6.0)
    s = math.sin(0.5 * theta) / theta
    return _series3(phi, 1.0, 2.0 * s * s, _c_sin3(theta))


@njit
def _left_jacobian_inv(phi):
    theta = _norm3(phi)
    if theta < SMALL_ANGLE:
        return _series3(phi, 1.0, -0.5, 0.0)
    # (t/2) cot(t/2) I + (1 - (t/2) cot(t/2)) a a^T - (t/2) a^, rewritten in K
    return _series3(phi, 1.0, -0.5, _c_cot2(theta))


@njit
def _so3_n(phi):
    # N(phi) = sum_k K^k / (k + 2)! = int_0^1 (1 - s) exp(s K) ds
    theta = _norm3(phi)
    if theta < SMALL_ANGLE:
        return _series3(phi, 0.5, 1.0 / 6.0, 1.0 / 24.0)
    return _series3(phi, 0.5, _c_sin3(theta), _c_cos4(theta))


@njit
def _ortho_defect(R):
    E = mmt(R, R)
    acc = 0.0
    for i in range(3):
        for j in range(3):
            d = E[i, j] - (1.0 if i == j else 0.0)
            acc += d * d
    return math.sqrt(acc)


@njit
def _polar(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, 2] = -U[:, 2]
        Q = U @ Vt
    return Q


@njit
def _maybe_orthonormalize(R):
    if _ortho_defect(R) > ORTHO_TOL:
        return _polar(R)
    return R


@njit
def _se23_exp(xi):
    phi = xi[0:3].copy()
    J = _left_jacobian(phi)
    return _so3_exp(phi), mv(J, xi[3:6]), mv(J, xi[6:9])


@njit
def _se23_log(C, v, p):
    phi, near = _so3_log(C)
    Ji = _left_jacobian_inv(phi)
    out = np.empty(9)
    out[0:3] = phi
    out[3:6] = mv(Ji, v)
    out[6:9] = mv(Ji, p)
    return out, near


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------
def _vec3(v: ArrayLike, name: str = "vector") -> NDArray[np.float64]:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {a.shape}")
    return np.ascontiguousarray(a)


def _mat3(m: ArrayLike, name: str = "matrix") -> NDArray[np.float64]:
    a = np.asarray(m, dtype=np.float64)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must have shape (3, 3), got {a.shape}")
    return np.ascontiguousarray(a)


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix, ``skew(v) @ w == np.cross(v, w)``."""
    return _skew(_vec3(v))


def vee(K: ArrayLike) -> NDArray[np.float64]:
    """Inverse of :func:`skew` (antisymmetric part is used)."""
    K = _mat3(K)
    return 0.5 * np.array([K[2, 1] - K[1, 2], K[0, 2] - K[2, 0], K[1, 0] - K[0, 1]])


def so3_exp(phi: ArrayLike) -> NDArray[np.float64]:
    """Rotation matrix of the rotation vector ``phi`` (Rodrigues formula)."""
    return _so3_exp(_vec3(phi, "phi"))


def so3_log(R: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector of ``R``.

    The angle is taken in ``[0, pi]``. Within 1e-6 rad of ``pi`` the axis is
    recovered from the symmetric part of ``R`` and an
    :class:`~se23nav.errors.AmbiguousRotationWarning` is emitted. The sign is
    fixed by the antisymmetric part when that part is still resolvable,
    otherwise the largest-magnitude axis component is made nonnegative.
    """
    phi, near = _so3_log(_mat3(R, "R"))
    if near:
        warnings.warn(
            "rotation angle within 1e-6 rad of pi; log axis sign is conventional",
            AmbiguousRotationWarning,
            stacklevel=2,
        )
    return phi


def left_jacobian(phi: ArrayLike) -> NDArray[np.float64]:
    """Left Jacobian of SO(3), ``J = int_0^1 exp(s phi^) ds``."""
    return _left_jacobian(_vec3(phi, "phi"))


def left_jacobian_inv(phi: ArrayLike) -> NDArray[np.float64]:
    """Inverse left Jacobian.

    Raises
    ------
    DomainError
        If ``|phi| >= 2 pi - 1e-3`` where the inverse is singular.
    """
    phi = _vec3(phi, "phi")
    if not np.linalg.norm(phi) < JINV_LIMIT:
        raise DomainError(f"|phi| = {np.linalg.norm(phi):.6g} is too close to 2*pi")
    return _left_jacobian_inv(phi)


def so3_n(phi: ArrayLike) -> NDArray[np.float64]:
    """Second integral ``int_0^1 (1 - s) exp(s phi^) ds`` used by the exact flow."""
    return _so3_n(_vec3(phi, "phi"))


def orthonormalize(R: ArrayLike) -> NDArray[np.float64]:
    """Nearest rotation matrix (polar projection)."""
    return _polar(_mat3(R))


def orthonormality_defect(R: ArrayLike) -> float:
    """Frobenius norm of ``R R^T - I``."""
    return float(_ortho_defect(_mat3(R)))


@dataclass(frozen=True)
class Twist:
    """Element of the SE_2(3) Lie algebra."""

    phi: NDArray[np.float64]
    nu: NDArray[np.float64]
    rho: NDArray[np.float64]

    def __post_init__(self) -> None:
        for name in ("phi", "nu", "rho"):
            a = _vec3(getattr(self, name), name)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"twist component {name} is not finite")
            object.__setattr__(self, name, a)

    @classmethod
    def from_vector(cls, xi: ArrayLike) -> Twist:
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != (9,):
            raise ValueError(f"twist vector must have shape (9,), got {xi.shape}")
        return cls(xi[0:3], xi[3:6], xi[6:9])

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.phi, self.nu, self.rho])

    def hat(self) -> NDArray[np.float64]:
        """5x5 matrix form of the twist."""
        out = np.zeros((5, 5))
        out[:3, :3] = _skew(self.phi)
        out[:3, 3] = self.nu
        out[:3, 4] = self.rho
        return out


@dataclass(frozen=True)
class ExtendedPose:
    """SE_2(3) element ``(rot, vel, pos)``."""

    rot: NDArray[np.float64]
    vel: NDArray[np.float64]
    pos: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rot", _mat3(self.rot, "rot"))
        object.__setattr__(self, "vel", _vec3(self.vel, "vel"))
        object.__setattr__(self, "pos", _vec3(self.pos, "pos"))

    @classmethod
    def identity(cls) -> ExtendedPose:
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: ArrayLike) -> ExtendedPose:
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (5, 5):
            raise ValueError(f"extended pose matrix must be 5x5, got {T.shape}")
        if not (np.array_equal(T[3], [0, 0, 0, 1, 0]) and np.array_equal(T[4], [0, 0, 0, 0, 1])):
            raise ValueError("bottom rows of an extended pose must be [0 0 0 1 0], [0 0 0 0 1]")
        return cls(T[:3, :3], T[:3, 3], T[:3, 4])

    def matrix(self) -> NDArray[np.float64]:
        out = np.eye(5)
        out[:3, :3] = self.rot
        out[:3, 3] = self.vel
        out[:3, 4] = self.pos
        return out


def compose(A: ExtendedPose, B: ExtendedPose) -> ExtendedPose:
    """Group product ``A B``."""
    return ExtendedPose(A.rot @ B.rot, A.rot @ B.vel + A.vel, A.rot @ B.pos + A.pos)


def se23_inverse(T: ExtendedPose) -> ExtendedPose:
    """Group inverse ``(C^T, -C^T v, -C^T p)``."""
    Ct = T.rot.T
    return ExtendedPose(Ct, -Ct @ T.vel, -Ct @ T.pos)


def se23_exp(z: Twist) -> ExtendedPose:
    """Exponential map ``(exp(phi), J nu, J rho)``."""
    C, v, p = _se23_exp(z.as_vector())
    return ExtendedPose(C, v, p)


def se23_log(T: ExtendedPose) -> Twist:
    """Logarithm map ``(log(C), J^-1 v, J^-1 p)``."""
    xi, near = _se23_log(T.rot, T.vel, T.pos)
    if near:
        warnings.warn(
            "rotation angle within 1e-6 rad of pi; log axis sign is conventional",
            AmbiguousRotationWarning,
            stacklevel=2,
        )
    return Twist.from_vector(xi)


def right_error(truth: ExtendedPose, estimate: ExtendedPose) -> ExtendedPose:
    """Right group error ``truth * estimate^-1``.

    Blocks: ``(C Ce^T, v - C Ce^T ve, p - C Ce^T pe)``.
    """
    dC = truth.rot @ estimate.rot.T
    return ExtendedPose(dC, truth.vel - dC @ estimate.vel, truth.pos - dC @ estimate.pos)


def left_error(truth: ExtendedPose, estimate: ExtendedPose) -> ExtendedPose:
    """Left group error ``estimate^-1 * truth``.

    Blocks: ``(Ce^T C, Ce^T (v - ve), Ce^T (p - pe))``.
    """
    Ct = estimate.rot.T
    return ExtendedPose(Ct @ truth.rot, Ct @ (truth.vel - estimate.vel), Ct @ (truth.pos - estimate.pos))
