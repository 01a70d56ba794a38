"""Scenario files.

A scenario is a TOML document. Angles are given in degrees, gyro biases in
deg/h, angle random walk in deg/sqrt(h) and accelerometer terms in micro-g;
everything is converted to SI on load. Attitude triples are ordered
``[pitch, roll, yaw]``.

Example::

    name = "gps-static"
    aiding = "gps"            # or "odometer"
    filters = ["lse", "rse", "so"]
    runs = 50
    seed = 1

    [origin]
    lat_deg = 30.0
    lon_deg = 114.0
    height_m = 20.0

    [profile]
    kind = "static"           # "static" | "segments" | "land_vehicle"
    duration_s = 300          # static profile only

    [sensor]
    gyro_bias_deg_h = 0.01
    ...

    [init_error]
    mode = "random"           # or "fixed" with attitude_deg = [p, r, y]
    attitude_std_deg = [60, 60, 160]

    [init_covariance]
    attitude_std_deg = [60, 60, 160]
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..earth import Geodetic
from ..errors import ScenarioError
from ..simulator import DEG, MotionSegment, SensorSpec, static_profile, land_vehicle_profile

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

FILTER_NAMES = ("lse", "rse", "so")
AIDING = ("gps", "odometer")


@dataclass(frozen=True)
class InitError:
    """Initial estimate error. ``attitude`` is (pitch, roll, yaw) in rad."""

    mode: str = "fixed"
    attitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    attitude_std: tuple[float, float, float] = (0.0, 0.0, 0.0)
    vel_ned: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pos_ned: tuple[float, float, float] = (0.0, 0.0, 0.0)
    zero_velocity: bool = False


@dataclass(frozen=True)
class InitCovariance:
    """Initial standard deviations; attitude as (pitch, roll, yaw) in rad."""

    attitude_std: tuple[float, float, float]
    vel_std: tuple[float, float, float] = (0.1, 0.1, 0.1)
    pos_std: tuple[float, float, float] = (10.0, 10.0, 10.0)
    gyro_bias_std: float | None = None
    accel_bias_std: float | None = None


@dataclass(frozen=True)
class Scenario:
    """A validated experiment description."""

    name: str
    aiding: str
    filters: tuple[str, ...]
    runs: int
    seed: int
    origin: Geodetic
    profile: tuple[MotionSegment, ...]
    sensor: SensorSpec
    init_error: InitError
    init_covariance: InitCovariance
    imu_rate_hz: float = 100.0
    aiding_rate_hz: float = 1.0
    output_rate_hz: float = 1.0
    initial_speed: float = 0.0
    initial_yaw: float = 0.0
    odo_floor_std: float = 0.01
    odo_nhc_std: float = 0.01
    extras: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def dt(self) -> float:
        return 1.0 / self.imu_rate_hz

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.profile))


# --------------------------------------------------------------------------
# field readers
# --------------------------------------------------------------------------
def _table(doc: dict, key: str, path: str, required: bool = False) -> dict:
    val = doc.get(key)
    if val is None:
        if required:
            raise ScenarioError(path, "missing table")
        return {}
    if not isinstance(val, dict):
        raise ScenarioError(path, "must be a table")
    return val


def _num(tbl: dict, key: str, path: str, default: float | None = None, *, lo: float | None = None,
         positive: bool = False) -> float:
    p = f"{path}.{key}" if path else key
    if key not in tbl:
        if default is None:
            raise ScenarioError(p, "missing value")
        return float(default)
    v = tbl[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(p, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise ScenarioError(p, "must be finite")
    if positive and not v > 0:
        raise ScenarioError(p, "must be positive")
    if lo is not None and v < lo:
        raise ScenarioError(p, f"must be >= {lo}")
    return v


def _int(tbl: dict, key: str, path: str, default: int | None = None, lo: int | None = None) -> int:
    p = f"{path}.{key}" if path else key
    if key not in tbl:
        if default is None:
            raise ScenarioError(p, "missing value")
        return default
    v = tbl[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(p, f"expected an integer, got {type(v).__name__}")
    if lo is not None and v < lo:
        raise ScenarioError(p, f"must be >= {lo}")
    return v


def _triple(tbl: dict, key: str, path: str, default: tuple | None = None, nonneg: bool = False) -> tuple[float, ...]:
    p = f"{path}.{key}" if path else key
    if key not in tbl:
        if default is None:
            raise ScenarioError(p, "missing value")
        return tuple(float(x) for x in default)
    v = tbl[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v, v, v]
    if not isinstance(v, list) or len(v) != 3:
        raise ScenarioError(p, "expected a number or a list of three numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ScenarioError(f"{p}[{i}]", "expected a finite number")
        if nonneg and x < 0:
            raise ScenarioError(f"{p}[{i}]", "must be nonnegative")
        out.append(float(x))
    return tuple(out)


def _str(tbl: dict, key: str, path: str, choices: tuple[str, ...] | None = None, default: str | None = None) -> str:
    p = f"{path}.{key}" if path else key
    if key not in tbl:
        if default is None:
            raise ScenarioError(p, "missing value")
        return default
    v = tbl[key]
    if not isinstance(v, str):
        raise ScenarioError(p, "expected a string")
    if choices is not None and v not in choices:
        raise ScenarioError(p, f"must be one of {', '.join(choices)}, got {v!r}")
    return v


def _check_keys(tbl: dict, allowed: set[str], path: str) -> None:
    extra = sorted(set(tbl) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ScenarioError(where, "unknown key")


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------
_SEGMENT_KEYS = {"status", "duration", "wx", "wy", "wz", "ax", "ay", "az"}


def _segments(prof: dict, dt: float) -> tuple[MotionSegment, ...]:
    kind = _str(prof, "kind", "profile", ("static", "segments", "land_vehicle"), "static")
    if kind == "static":
        _check_keys(prof, {"kind", "duration_s", "initial_speed", "initial_yaw_deg"}, "profile")
        segs = static_profile(_num(prof, "duration_s", "profile", positive=True))
    elif kind == "land_vehicle":
        _check_keys(prof, {"kind", "initial_speed", "initial_yaw_deg"}, "profile")
        segs = land_vehicle_profile()
    else:
        _check_keys(prof, {"kind", "segments", "initial_speed", "initial_yaw_deg"}, "profile")
        rows = prof.get("segments")
        if not isinstance(rows, list) or not rows:
            raise ScenarioError("profile.segments", "a non-empty array of tables is required")
        segs = []
        for i, row in enumerate(rows):
            path = f"profile.segments[{i}]"
            if not isinstance(row, dict):
                raise ScenarioError(path, "must be a table")
            _check_keys(row, _SEGMENT_KEYS, path)
            try:
                segs.append(
                    MotionSegment(
                        _num(row, "duration", path, positive=True),
                        _num(row, "wx", path, 0.0) * DEG,
                        _num(row, "wy", path, 0.0) * DEG,
                        _num(row, "wz", path, 0.0) * DEG,
                        _num(row, "ax", path, 0.0),
                        _num(row, "ay", path, 0.0),
                        _num(row, "az", path, 0.0),
                        _str(row, "status", path, default=""),
                    )
                )
            except ValueError as exc:
                if isinstance(exc, ScenarioError):
                    raise
                raise ScenarioError(path, str(exc)) from None
    for i, s in enumerate(segs):
        k = round(s.duration / dt)
        if k < 1 or abs(k * dt - s.duration) > 1e-9 * max(1.0, s.duration):
            raise ScenarioError(f"profile.segments[{i}].duration", f"must be a multiple of the IMU interval {dt}")
    return tuple(segs)


_SENSOR_KEYS = {
    "gyro_bias_deg_h", "gyro_arw_deg_sqrt_h", "accel_bias_ug", "accel_vrw_ug_sqrt_hz",
    "gps_vel_std", "gps_pos_std", "odo_scale_std",
}


def _sensor(tbl: dict) -> SensorSpec:
    _check_keys(tbl, _SENSOR_KEYS, "sensor")
    vals = {k: _num(tbl, k, "sensor", 0.0, lo=0.0) for k in _SENSOR_KEYS}
    return SensorSpec.from_units(**vals)


def _init_error(tbl: dict) -> InitError:
    _check_keys(tbl, {"mode", "attitude_deg", "attitude_std_deg", "vel_ned", "pos_ned", "zero_velocity"}, "init_error")
    mode = _str(tbl, "mode", "init_error", ("fixed", "random"), "fixed")
    zero_v = tbl.get("zero_velocity", False)
    if not isinstance(zero_v, bool):
        raise ScenarioError("init_error.zero_velocity", "expected true or false")
    att = _triple(tbl, "attitude_deg", "init_error", (0, 0, 0))
    std = _triple(tbl, "attitude_std_deg", "init_error", (0, 0, 0), nonneg=True)
    if mode == "random" and "attitude_std_deg" not in tbl:
        raise ScenarioError("init_error.attitude_std_deg", "required when mode is random")
    return InitError(
        mode,
        tuple(a * DEG for a in att),
        tuple(s * DEG for s in std),
        _triple(tbl, "vel_ned", "init_error", (0, 0, 0)),
        _triple(tbl, "pos_ned", "init_error", (0, 0, 0)),
        zero_v,
    )


def _init_cov(tbl: dict, sensor: SensorSpec) -> InitCovariance:
    _check_keys(
        tbl, {"attitude_std_deg", "vel_std", "pos_std", "gyro_bias_std_deg_h", "accel_bias_std_ug"}, "init_covariance"
    )
    att = _triple(tbl, "attitude_std_deg", "init_covariance", nonneg=True)
    gb = _num(tbl, "gyro_bias_std_deg_h", "init_covariance", -1.0, lo=0.0)
    ab = _num(tbl, "accel_bias_std_ug", "init_covariance", -1.0, lo=0.0)
    return InitCovariance(
        tuple(a * DEG for a in att),
        _triple(tbl, "vel_std", "init_covariance", (0.1, 0.1, 0.1), nonneg=True),
        _triple(tbl, "pos_std", "init_covariance", (10.0, 10.0, 10.0), nonneg=True),
        sensor.gyro_bias if gb < 0 else SensorSpec.from_units(gyro_bias_deg_h=gb).gyro_bias,
        sensor.accel_bias if ab < 0 else SensorSpec.from_units(accel_bias_ug=ab).accel_bias,
    )


_TOP_KEYS = {
    "name", "aiding", "filters", "runs", "seed", "imu_rate_hz", "aiding_rate_hz", "output_rate_hz",
    "origin", "profile", "sensor", "init_error", "init_covariance", "filter", "extras",
}


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate a parsed scenario document.

    Raises
    ------
    ScenarioError
        With the dotted path of the first offending field.
    """
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a table")
    _check_keys(doc, _TOP_KEYS, "")
    name = _str(doc, "name", "")
    aiding = _str(doc, "aiding", "", AIDING)
    filters = doc.get("filters", list(FILTER_NAMES))
    if isinstance(filters, str):
        filters = [f.strip() for f in filters.split(",") if f.strip()]
    if not isinstance(filters, list) or not filters:
        raise ScenarioError("filters", "a non-empty list is required")
    for i, f in enumerate(filters):
        if f not in FILTER_NAMES:
            raise ScenarioError(f"filters[{i}]", f"must be one of {', '.join(FILTER_NAMES)}, got {f!r}")
    if len(set(filters)) != len(filters):
        raise ScenarioError("filters", "duplicate entries")
    runs = _int(doc, "runs", "", 1, lo=1)
    seed = _int(doc, "seed", "", 0, lo=0)
    imu_rate = _num(doc, "imu_rate_hz", "", 100.0, positive=True)
    dt = 1.0 / imu_rate
    if dt > 0.01 + 1e-15:
        raise ScenarioError("imu_rate_hz", "must be at least 100 Hz")
    aid_rate = _num(doc, "aiding_rate_hz", "", 1.0 if aiding == "gps" else 10.0, positive=True)
    out_rate = _num(doc, "output_rate_hz", "", 1.0, positive=True)
    for key, rate in (("aiding_rate_hz", aid_rate), ("output_rate_hz", out_rate)):
        stride = imu_rate / rate
        if rate > imu_rate or abs(stride - round(stride)) > 1e-9:
            raise ScenarioError(key, "IMU rate must be an integer multiple of this rate")

    org = _table(doc, "origin", "origin", required=True)
    _check_keys(org, {"lat_deg", "lon_deg", "height_m"}, "origin")
    lat = _num(org, "lat_deg", "origin")
    if abs(lat) > 89.0:
        raise ScenarioError("origin.lat_deg", "must be within [-89, 89] degrees")
    origin = Geodetic.from_degrees(lat, _num(org, "lon_deg", "origin"), _num(org, "height_m", "origin", 0.0))

    prof = _table(doc, "profile", "profile", required=True)
    segs = _segments(prof, dt)
    sensor = _sensor(_table(doc, "sensor", "sensor"))
    ierr = _init_error(_table(doc, "init_error", "init_error"))
    icov = _init_cov(_table(doc, "init_covariance", "init_covariance", required=True), sensor)
    flt = _table(doc, "filter", "filter")
    _check_keys(flt, {"odo_floor_std", "odo_nhc_std"}, "filter")
    extras = _table(doc, "extras", "extras")
    return Scenario(
        name=name,
        aiding=aiding,
        filters=tuple(filters),
        runs=runs,
        seed=seed,
        origin=origin,
        profile=segs,
        sensor=sensor,
        init_error=ierr,
        init_covariance=icov,
        imu_rate_hz=imu_rate,
        aiding_rate_hz=aid_rate,
        output_rate_hz=out_rate,
        initial_speed=_num(prof, "initial_speed", "profile", 0.0, lo=0.0),
        initial_yaw=_num(prof, "initial_yaw_deg", "profile", 0.0) * DEG,
        odo_floor_std=_num(flt, "odo_floor_std", "filter", 0.01, positive=True),
        odo_nhc_std=_num(flt, "odo_nhc_std", "filter", 0.01, positive=True),
        extras=dict(extras),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError("<file>", f"{path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("<file>", f"{path}: {exc}") from None
    return scenario_from_dict(doc)


def bundled_scenarios() -> dict[str, Path]:
    """Scenario files shipped with the package, keyed by stem."""
    root = Path(__file__).resolve().parent.parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.toml"))}


def attitude_std_ned(std_pry: tuple[float, float, float]) -> NDArray[np.float64]:
    """Map (pitch, roll, yaw) std to rotations about north, east and down."""
    return np.array([std_pry[1], std_pry[0], std_pry[2]])
