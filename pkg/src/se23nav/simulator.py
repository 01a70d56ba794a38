"""Truth trajectories and sensor synthesis.

The truth generator integrates a local-level kinematic model (body rates
applied to the body-to-NED attitude, longitudinal and vertical accelerations
applied to the body speed) and converts every step to an ECEF target. The
ideal IMU sample for each step is obtained by inverting the exact transformed
mechanization step, and the ECEF truth is then produced by that same step.
Re-propagating the truth with the ideal IMU is therefore bit-identical.

Motion segments use right-forward-up body axes: ``x`` right,
``y`` forward, ``z`` up. So ``wx`` is the pitch rate, ``wy`` the roll rate,
``wz`` the yaw rate (positive is a left turn), ``ax`` lateral, ``ay``
longitudinal and ``az`` up acceleration. Internally the body frame is
forward-right-down.
"""
from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._jit import njit
from ._linalg import mm, mtv, mv
from .earth import WGS84, EarthModel, Geodetic, _c_en, _ecef, _geodetic, _gravitation, dcm_to_euler, euler_to_dcm, radii
from .liegroup import _cross, _so3_exp
from .mechanization import NavState, _earth_terms, _invert_step, _step_transformed_e

# right-forward-up -> forward-right-down
RFU_TO_FRD = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])

DEG = math.pi / 180.0
DEG_PER_H = DEG / 3600.0
DEG_PER_SQRT_H = DEG / 60.0
MICRO_G = 9.80665e-6


@dataclass(frozen=True)
class MotionSegment:
    """One profile row; rates in rad/s, accelerations in m/s^2 (right-forward-up axes)."""

    duration: float
    wx: float = 0.0
    wy: float = 0.0
    wz: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    az: float = 0.0
    status: str = ""

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError(f"segment duration must be positive, got {self.duration}")
        vals = (self.wx, self.wy, self.wz, self.ax, self.ay, self.az)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("segment rates and accelerations must be finite")
        # lateral acceleration only marks the turn direction; it must agree with the yaw rate
        if self.ax != 0.0 and self.wz != 0.0 and math.copysign(1.0, self.ax) == math.copysign(1.0, self.wz):
            raise ValueError("lateral acceleration sign contradicts the turn direction")

    @property
    def body_rate_frd(self) -> NDArray[np.float64]:
        return RFU_TO_FRD @ np.array([self.wx, self.wy, self.wz])


@dataclass(frozen=True)
class SensorSpec:
    """Sensor error magnitudes in SI units."""

    gyro_bias: float = 0.0
    gyro_arw: float = 0.0
    accel_bias: float = 0.0
    accel_vrw: float = 0.0
    gps_vel_std: float = 0.0
    gps_pos_std: float = 0.0
    odo_scale_std: float = 0.0

    def __post_init__(self) -> None:
        for name, val in self.__dict__.items():
            if not (math.isfinite(val) and val >= 0):
                raise ValueError(f"SensorSpec.{name} must be finite and nonnegative")

    @classmethod
    def from_units(
        cls,
        gyro_bias_deg_h: float = 0.0,
        gyro_arw_deg_sqrt_h: float = 0.0,
        accel_bias_ug: float = 0.0,
        accel_vrw_ug_sqrt_hz: float = 0.0,
        gps_vel_std: float = 0.0,
        gps_pos_std: float = 0.0,
        odo_scale_std: float = 0.0,
    ) -> SensorSpec:
        """Build from deg/h, deg/sqrt(h), micro-g and micro-g/sqrt(Hz)."""
        return cls(
            gyro_bias_deg_h * DEG_PER_H,
            gyro_arw_deg_sqrt_h * DEG_PER_SQRT_H,
            accel_bias_ug * MICRO_G,
            accel_vrw_ug_sqrt_hz * MICRO_G,
            gps_vel_std,
            gps_pos_std,
            odo_scale_std,
        )


@dataclass(frozen=True)
class TruthSample:
    """Truth at ``t`` and the ideal IMU sample held over the following step."""

    t: float
    nav: NavState
    body_rate: NDArray[np.float64]
    specific_force: NDArray[np.float64]


@dataclass(frozen=True)
class Truth:
    """Truth trajectory: ``n + 1`` epochs and ``n`` ideal IMU samples."""

    t: NDArray[np.float64]
    att: NDArray[np.float64]
    vel: NDArray[np.float64]
    pos: NDArray[np.float64]
    gyro: NDArray[np.float64]
    accel: NDArray[np.float64]
    dt: float

    def __len__(self) -> int:
        return self.gyro.shape[0]

    def __iter__(self) -> Iterator[TruthSample]:
        for k in range(len(self)):
            yield TruthSample(self.t[k], NavState(self.att[k], self.vel[k], self.pos[k]), self.gyro[k], self.accel[k])

    def nav(self, k: int) -> NavState:
        return NavState(self.att[k], self.vel[k], self.pos[k])


@dataclass(frozen=True)
class ImuLog:
    """IMU samples: ``t`` (n,), ``gyro`` and ``accel`` (n, 3), SI units."""

    t: NDArray[np.float64]
    gyro: NDArray[np.float64]
    accel: NDArray[np.float64]


@dataclass(frozen=True)
class GpsLog:
    """GPS fixes: ``t``, geodetic position (deg, deg, m) and NED velocity."""

    t: NDArray[np.float64]
    lat_deg: NDArray[np.float64]
    lon_deg: NDArray[np.float64]
    h: NDArray[np.float64]
    vel_ned: NDArray[np.float64]


@dataclass(frozen=True)
class OdoLog:
    """Odometer forward speed (m/s)."""

    t: NDArray[np.float64]
    speed: NDArray[np.float64]


@dataclass(frozen=True)
class RefLog:
    """Reference trajectory in geodetic/NED/Euler form (angles in degrees)."""

    t: NDArray[np.float64]
    lat_deg: NDArray[np.float64]
    lon_deg: NDArray[np.float64]
    h: NDArray[np.float64]
    vel_ned: NDArray[np.float64]
    roll_deg: NDArray[np.float64]
    pitch_deg: NDArray[np.float64]
    yaw_deg: NDArray[np.float64]


# --------------------------------------------------------------------------
# truth generation
# --------------------------------------------------------------------------
@njit
def _generate(steps, rates, accels, dt, Cbn, speed, up, p, wie, params):
    n = 0
    for s in range(steps.shape[0]):
        n += steps[s]
    att = np.empty((n + 1, 3, 3))
    vb_out = np.empty((n + 1, 3))
    pos = np.empty((n + 1, 3))
    gyro = np.empty((n, 3))
    accel = np.empty((n, 3))
    lat, lon, _, _ = _geodetic(p, params)
    Cen = _c_en(lat, lon)
    vbody = np.array([speed, 0.0, -up])
    ve = mtv(Cen, mv(Cbn, vbody))
    C = mtv_mat(Cen, Cbn)
    vb = ve + _cross(wie, p)
    att[0] = C
    vb_out[0] = vb
    pos[0] = p
    Re, Je, Ne = _earth_terms(wie, dt)
    k = 0
    for s in range(steps.shape[0]):
        Rw = _so3_exp(rates[s] * dt)
        for _ in range(steps[s]):
            Cbn = mm(Cbn, Rw)
            speed += accels[s, 0] * dt
            up += accels[s, 1] * dt
            vbody = np.array([speed, 0.0, -up])
            vn = mv(Cbn, vbody)
            # predict the next position to pick its local-level frame
            ve_next = mtv(Cen, vn)
            p_pred = p + 0.5 * dt * (ve + ve_next)
            lat, lon, _, _ = _geodetic(p_pred, params)
            Cen = _c_en(lat, lon)
            C_des = mtv_mat(Cen, Cbn)
            vb_des = mtv(Cen, vn) + _cross(wie, p_pred)
            g = _gravitation(p, params)
            w, f = _invert_step(C, vb, p, C_des, vb_des, dt, g, wie)
            C, vb, p = _step_transformed_e(C, vb, p, w, f, dt, g, Re, Je, Ne)
            ve = vb - _cross(wie, p)
            gyro[k] = w
            accel[k] = f
            k += 1
            att[k] = C
            vb_out[k] = vb
            pos[k] = p
    return att, vb_out, pos, gyro, accel


@njit
def mtv_mat(A, B):
    """A.T @ B for 3x3 operands."""
    return mm(A.T.copy(), B)


def generate_truth(
    profile: Sequence[MotionSegment],
    origin: Geodetic,
    dt: float,
    em: EarthModel = WGS84,
    initial_yaw: float = 0.0,
    initial_pitch: float = 0.0,
    initial_roll: float = 0.0,
    initial_speed: float = 0.0,
) -> Truth:
    """Generate the ECEF truth and ideal IMU for a motion profile.

    Segment durations must be whole multiples of ``dt``. Angles in radians.
    """
    if len(profile) == 0:
        raise ValueError("motion profile is empty")
    if not 0 < dt <= 0.01 + 1e-15:
        raise ValueError(f"truth dt must be in (0, 0.01] s, got {dt}")
    steps = []
    for i, seg in enumerate(profile):
        k = round(seg.duration / dt)
        if abs(k * dt - seg.duration) > 1e-9 * max(1.0, seg.duration):
            raise ValueError(f"segment {i} duration {seg.duration} is not a multiple of dt={dt}")
        steps.append(k)
    rates = np.array([seg.body_rate_frd for seg in profile], dtype=np.float64)
    accels = np.array([[seg.ay, seg.az] for seg in profile], dtype=np.float64)
    Cbn = euler_to_dcm(initial_roll, initial_pitch, initial_yaw)
    p0 = _ecef(origin.lat, origin.lon, origin.height, em.params)
    att, vb, pos, gyro, accel = _generate(
        np.array(steps, dtype=np.int64), rates, accels, float(dt), Cbn, float(initial_speed), 0.0, p0,
        em.omega_vec, em.params,
    )
    vel = vb - np.cross(em.omega_vec, pos)
    t = np.arange(att.shape[0], dtype=np.float64) * dt
    return Truth(t, att, vel, pos, gyro, accel, float(dt))


def static_profile(duration: float) -> list[MotionSegment]:
    return [MotionSegment(duration, status="static")]


TURN_RATE = 0.9 * DEG
TURN_MARK = 9.0

# (status, duration s, yaw-rate sign, longitudinal acceleration m/s^2)
_LAND_VEHICLE = (
    ("static", 100, 0, 0.0),
    ("ACC", 10, 0, 1.0),
    ("CS", 3000, 0, 0.0),
    ("LT", 100, 1, 0.0),
    ("CS", 3000, 0, 0.0),
    ("RT", 100, -1, 0.0),
    ("CS", 1000, 0, 0.0),
    ("RT", 100, -1, 0.0),
    ("CS", 1000, 0, 0.0),
    ("RT", 100, -1, 0.0),
    ("CS", 5000, 0, 0.0),
    ("LT", 100, 1, 0.0),
    ("CS", 3000, 0, 0.0),
    ("LT", 100, 1, 0.0),
    ("CS", 1000, 0, 0.0),
    ("LT", 100, 1, 0.0),
    ("CS", 1000, 0, 0.0),
    ("DEC", 10, 0, -1.0),
    ("static", 60, 0, 0.0),
)


def land_vehicle_profile() -> list[MotionSegment]:
    """The 18 880 s land-vehicle profile with 90 degree turns at 0.9 deg/s.

    The lateral entry only marks the turn side; the centripetal acceleration
    itself follows from the speed and the yaw rate.
    """
    return [
        MotionSegment(float(d), wz=s * TURN_RATE, ax=-s * TURN_MARK, ay=a, status=st) for st, d, s, a in _LAND_VEHICLE
    ]


# --------------------------------------------------------------------------
# sensor synthesis
# --------------------------------------------------------------------------
def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


STREAM_IMU, STREAM_GPS, STREAM_ODO, STREAM_INIT = 1, 2, 3, 4


def imu_biases(spec: SensorSpec, seed: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Constant per-run biases: configured magnitude with random sign per axis."""
    rng = _rng(seed, STREAM_IMU)
    signs = rng.choice(np.array([-1.0, 1.0]), size=6)
    return spec.gyro_bias * signs[:3], spec.accel_bias * signs[3:]


def synthesize_imu(truth: Truth, spec: SensorSpec, seed: int) -> ImuLog:
    """Add constant biases and white noise (``sigma = density / sqrt(dt)``)."""
    bg, ba = imu_biases(spec, seed)
    rng = _rng(seed, STREAM_IMU)
    rng.choice(np.array([-1.0, 1.0]), size=6)  # keep the stream aligned with imu_biases
    n = len(truth)
    ng = rng.standard_normal((n, 3)) * (spec.gyro_arw / math.sqrt(truth.dt))
    na = rng.standard_normal((n, 3)) * (spec.accel_vrw / math.sqrt(truth.dt))
    return ImuLog(truth.t[:n].copy(), truth.gyro + bg + ng, truth.accel + ba + na)


def _epochs(truth: Truth, rate: float, start: float = 0.0) -> NDArray[np.int64]:
    stride = round(1.0 / (rate * truth.dt))
    if stride < 1 or abs(stride * truth.dt * rate - 1.0) > 1e-9:
        raise ValueError(f"rate {rate} Hz is not commensurate with dt {truth.dt}")
    first = round(start / truth.dt)
    return np.arange(first, truth.t.shape[0], stride, dtype=np.int64)


def _geodetic_arrays(pos: NDArray, em: EarthModel) -> tuple[NDArray, NDArray, NDArray]:
    out = np.array([_geodetic(p, em.params)[:3] for p in pos])
    return out[:, 0], out[:, 1], out[:, 2]


def synthesize_gps(truth: Truth, spec: SensorSpec, rate: float, seed: int, em: EarthModel = WGS84) -> GpsLog:
    """GPS position/velocity fixes with independent NED Gaussian noise.

    Epochs start one period after the first truth epoch.
    """
    idx = _epochs(truth, rate, 1.0 / rate)
    rng = _rng(seed, STREAM_GPS)
    lat, lon, h = _geodetic_arrays(truth.pos[idx], em)
    vn = np.array([_c_en(la, lo) @ v for la, lo, v in zip(lat, lon, truth.vel[idx])]).reshape(-1, 3)
    dpos = rng.standard_normal((idx.shape[0], 3)) * spec.gps_pos_std
    dvel = rng.standard_normal((idx.shape[0], 3)) * spec.gps_vel_std
    m, n = np.array([radii(la, em) for la in lat]).reshape(-1, 2).T
    lat_n = lat + dpos[:, 0] / (m + h)
    lon_n = lon + dpos[:, 1] / ((n + h) * np.cos(lat))
    return GpsLog(truth.t[idx], np.degrees(lat_n), np.degrees(lon_n), h - dpos[:, 2], vn + dvel)


def synthesize_odometer(truth: Truth, spec: SensorSpec, rate: float, seed: int) -> OdoLog:
    """Forward body speed with multiplicative scale noise."""
    idx = _epochs(truth, rate, 1.0 / rate)
    rng = _rng(seed, STREAM_ODO)
    vb = np.einsum("kji,kj->ki", truth.att[idx], truth.vel[idx])
    scale = 1.0 + rng.standard_normal(idx.shape[0]) * spec.odo_scale_std
    return OdoLog(truth.t[idx], vb[:, 0] * scale)


def reference_log(truth: Truth, rate: float, em: EarthModel = WGS84) -> RefLog:
    """Truth sampled at ``rate`` (including t = 0) in the REF log form."""
    idx = _epochs(truth, rate, 0.0)
    lat, lon, h = _geodetic_arrays(truth.pos[idx], em)
    vn = np.empty((idx.shape[0], 3))
    eul = np.empty((idx.shape[0], 3))
    for i, k in enumerate(idx):
        Cen = _c_en(lat[i], lon[i])
        vn[i] = Cen @ truth.vel[k]
        eul[i] = dcm_to_euler(Cen @ truth.att[k])
    return RefLog(
        truth.t[idx], np.degrees(lat), np.degrees(lon), h, vn,
        np.degrees(eul[:, 0]), np.degrees(eul[:, 1]), np.degrees(eul[:, 2]),
    )


def misalignment_rotation(pitch: float, roll: float, yaw: float) -> NDArray[np.float64]:
    """Local-level attitude perturbation ``Rz(yaw) Ry(pitch) Rx(roll)`` (radians)."""
    return euler_to_dcm(roll, pitch, yaw)


def random_misalignment_angles(
    std_pitch: float, std_roll: float, std_yaw: float, seed: int
) -> tuple[float, float, float]:
    """Draw ``(pitch, roll, yaw)`` from independent zero-mean Gaussians."""
    z = _rng(seed, STREAM_INIT).standard_normal(3)
    return float(z[0] * std_pitch), float(z[1] * std_roll), float(z[2] * std_yaw)


def random_misalignment(std_pitch: float, std_roll: float, std_yaw: float, seed: int) -> NDArray[np.float64]:
    """Random initial-attitude perturbation (see :func:`misalignment_rotation`)."""
    return misalignment_rotation(*random_misalignment_angles(std_pitch, std_roll, std_yaw, seed))
