"""Monte Carlo execution, log replay and error metrics.

The in-memory path and the replay path share one pipeline: a simulated run
first produces the same log objects that :mod:`.logs` reads back, so replaying
exported files reproduces the in-memory results bit for bit.
"""
from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..earth import WGS84, EarthModel, Geodetic, _c_en, _ecef, _geodetic, dcm_to_euler, euler_to_dcm, radii
from ..error_models import FILTER_KINDS, NoiseSpec
from ..errors import GimbalLockWarning, LogFormatError
from ..filter import FilterConfig, FilterRun, run_filter
from ..mechanization import MAX_DT, NavState
from ..simulator import (
    DEG,
    GpsLog,
    ImuLog,
    OdoLog,
    RefLog,
    Truth,
    generate_truth,
    random_misalignment_angles,
    reference_log,
    synthesize_gps,
    synthesize_imu,
    synthesize_odometer,
)
from . import logs
from .scenario import Scenario, attitude_std_ned

ERROR_COLUMNS = (
    "err_pitch_deg", "err_roll_deg", "err_yaw_deg",
    "err_lat_m", "err_lon_m", "err_h_m",
    "err_vn", "err_ve", "err_vd",
)
BIAS_COLUMNS = ("bgx", "bgy", "bgz", "bax", "bay", "baz")
RESULT_COLUMNS = ("t",) + ERROR_COLUMNS + BIAS_COLUMNS
DEG_PER_H = DEG / 3600.0
MICRO_G = 9.80665e-6

# measurement-noise floors used when the sensor spec is exactly noise free
GPS_VEL_FLOOR = 1e-3
GPS_POS_FLOOR = 1e-2
ODO_SCALE_FLOOR = 1e-4


# --------------------------------------------------------------------------
# error metrics
# --------------------------------------------------------------------------
def attitude_error_angles(est: ArrayLike, truth: ArrayLike, at: Geodetic) -> NDArray[np.float64]:
    """Attitude error ``(pitch, roll, yaw)`` in degrees.

    Both body-to-ECEF attitudes are expressed in the local NED frame at
    ``at`` and the error rotation ``C_b^n(est) C_b^n(truth)^T`` is split into
    yaw-pitch-roll Euler angles. A :class:`GimbalLockWarning` is issued when
    the error pitch exceeds 89 degrees.
    """
    Cen = _c_en(at.lat, at.lon)
    d = (Cen @ np.asarray(est, dtype=np.float64)) @ (Cen @ np.asarray(truth, dtype=np.float64)).T
    roll, pitch, yaw = dcm_to_euler(d)
    if abs(pitch) > 89.0 * DEG:
        warnings.warn(f"error pitch {math.degrees(pitch):.3f} deg is near gimbal lock", GimbalLockWarning, stacklevel=2)
    return np.degrees(np.array([pitch, roll, yaw]))


@dataclass(frozen=True)
class RefStates:
    """REF log converted to ECEF quantities."""

    t: NDArray[np.float64]
    geo: NDArray[np.float64]  # (lat, lon, h) rad, rad, m
    att: NDArray[np.float64]  # C_b^e
    vel_ned: NDArray[np.float64]
    pos: NDArray[np.float64]


def ref_states(ref: RefLog, em: EarthModel = WGS84) -> RefStates:
    n = ref.t.shape[0]
    lat = np.radians(ref.lat_deg)
    lon = np.radians(ref.lon_deg)
    att = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    for k in range(n):
        Cbn = euler_to_dcm(math.radians(ref.roll_deg[k]), math.radians(ref.pitch_deg[k]), math.radians(ref.yaw_deg[k]))
        att[k] = _c_en(lat[k], lon[k]).T @ Cbn
        pos[k] = _ecef(lat[k], lon[k], ref.h[k], em.params)
    return RefStates(ref.t, np.column_stack([lat, lon, ref.h]), att, ref.vel_ned, pos)


def navigation_errors(run: FilterRun, ref: RefStates, rows: NDArray, em: EarthModel = WGS84) -> NDArray[np.float64]:
    """Error columns (see ``ERROR_COLUMNS``) of a filter run against REF rows.

    Epochs without an estimate (after a divergence) give NaN rows.
    """
    out = np.full((rows.shape[0], len(ERROR_COLUMNS)), np.nan)
    for i, k in enumerate(rows):
        if not (np.all(np.isfinite(run.pos[i])) and np.all(np.isfinite(run.att[i]))):
            continue
        lat_r, lon_r, h_r = ref.geo[k]
        at = Geodetic(lat_r, lon_r, h_r)
        lat, lon, h, _ = _geodetic(run.pos[i], em.params)
        m, n = radii(lat_r, em)
        dlon = (lon - lon_r + math.pi) % (2.0 * math.pi) - math.pi
        out[i, 0:3] = attitude_error_angles(run.att[i], ref.att[k], at)
        out[i, 3] = (lat - lat_r) * (m + h_r)
        out[i, 4] = dlon * (n + h_r) * math.cos(lat_r)
        out[i, 5] = h - h_r
        out[i, 6:9] = _c_en(lat_r, lon_r) @ run.vel[i] - ref.vel_ned[k]
    return out


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class RunResult:
    """Per-epoch errors of one filter on one run.

    ``errors`` follows ``ERROR_COLUMNS``; ``bias`` holds the open-loop bias
    estimates in deg/h (gyro) and micro-g (accelerometer).
    """

    filter: str
    run: int
    seed: int
    t: NDArray[np.float64]
    errors: NDArray[np.float64]
    bias: NDArray[np.float64]
    hygiene: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("result epochs must be strictly increasing")

    @property
    def table(self) -> NDArray[np.float64]:
        return np.column_stack([self.t, self.errors, self.bias])

    @property
    def terminal(self) -> NDArray[np.float64]:
        return self.errors[-1].copy()

    def rms(self, t_from: float = -math.inf, t_to: float = math.inf) -> NDArray[np.float64]:
        """Per-column RMS over epochs with ``t_from <= t <= t_to``."""
        m = (self.t >= t_from) & (self.t <= t_to)
        if not np.any(m):
            raise ValueError("empty RMS window")
        return np.sqrt(np.mean(self.errors[m] ** 2, axis=0))

    def horizontal_error(self) -> NDArray[np.float64]:
        return np.hypot(self.errors[:, 3], self.errors[:, 4])

    def csv(self) -> str:
        return logs.format_table(RESULT_COLUMNS, self.table)


# --------------------------------------------------------------------------
# pipeline pieces
# --------------------------------------------------------------------------
def imu_intervals(t: NDArray[np.float64]) -> NDArray[np.float64]:
    """Hold interval of every IMU sample.

    Sample ``k`` is held until ``t[k+1]``; the last one for the median
    interval. When all intervals agree with the median to 1e-9 s, the median
    rounded to 1e-9 s is used throughout so that ``dt`` is exactly uniform.
    """
    if t.shape[0] < 2:
        raise LogFormatError("IMU log needs at least two samples")
    d = np.diff(t)
    nominal = round(float(np.median(d)), 9)
    if np.all(np.abs(d - nominal) < 1e-9):
        return np.full(t.shape[0], nominal)
    return np.append(d, nominal)


def epoch_index(t_imu: NDArray, dts: NDArray, t_query: NDArray) -> tuple[NDArray[np.int64], NDArray[np.bool_]]:
    """Nearest IMU epoch for each query time and a mask of those in range.

    Epoch ``j`` is the time after ``j`` samples: ``t_imu[0] + sum(dts[:j])``.
    Queries farther than half an interval from every epoch are masked out.
    """
    grid = np.concatenate([t_imu, [t_imu[-1] + dts[-1]]])
    j = np.clip(np.searchsorted(grid, t_query), 1, grid.shape[0] - 1)
    left = grid[j - 1]
    right = grid[j]
    j = np.where(np.abs(t_query - left) <= np.abs(right - t_query), j - 1, j)
    ok = np.abs(grid[j] - t_query) <= 0.5 * np.median(dts) + 1e-12
    return j.astype(np.int64), ok


def _epoch_time(t_imu: NDArray, dts: NDArray, j: int) -> float:
    return float(t_imu[j]) if j < t_imu.shape[0] else float(t_imu[-1] + dts[-1])


def gps_measurements(gps: GpsLog, em: EarthModel = WGS84) -> NDArray[np.float64]:
    """Rows ``[v_e, p_e]`` in ECEF from a GPS log."""
    out = np.empty((gps.t.shape[0], 6))
    for k in range(gps.t.shape[0]):
        lat = math.radians(gps.lat_deg[k])
        lon = math.radians(gps.lon_deg[k])
        out[k, :3] = _c_en(lat, lon).T @ gps.vel_ned[k]
        out[k, 3:] = _ecef(lat, lon, gps.h[k], em.params)
    return out


def initial_estimate(
    ref: RefStates, scenario: Scenario, seed: int, em: EarthModel = WGS84
) -> tuple[NavState, NDArray[np.float64]]:
    """Perturbed initial estimate at the first REF row and its attitude error (pitch, roll, yaw)."""
    ie = scenario.init_error
    if ie.mode == "random":
        ang = np.array(random_misalignment_angles(*ie.attitude_std, seed))
    else:
        ang = np.array(ie.attitude, dtype=np.float64)
    lat, lon, h = ref.geo[0]
    Cen = _c_en(lat, lon)
    Cbn = Cen @ ref.att[0]
    Cbn_est = euler_to_dcm(ang[1], ang[0], ang[2]) @ Cbn
    vn = np.zeros(3) if ie.zero_velocity else ref.vel_ned[0] + np.asarray(ie.vel_ned)
    m, n = radii(lat, em)
    dn, de, dd = ie.pos_ned
    p = _ecef(lat + dn / (m + h), lon + de / ((n + h) * math.cos(lat)), h - dd, em.params)
    return NavState(Cen.T @ Cbn_est, Cen.T @ vn, p), ang


def filter_config(scenario: Scenario, name: str) -> FilterConfig:
    """Filter settings for ``name`` in {lse, rse, so}."""
    s = scenario.sensor
    ic = scenario.init_covariance
    return FilterConfig(
        error_definition=FILTER_KINDS[name],
        init_attitude_std=attitude_std_ned(ic.attitude_std),
        init_vel_std=np.array(ic.vel_std),
        init_pos_std=np.array(ic.pos_std),
        init_gyro_bias_std=np.full(3, ic.gyro_bias_std),
        init_accel_bias_std=np.full(3, ic.accel_bias_std),
        noise=NoiseSpec(s.gyro_arw, s.accel_vrw, s.gyro_bias, s.accel_bias),
        gps_vel_std=max(s.gps_vel_std, GPS_VEL_FLOOR),
        gps_pos_std=max(s.gps_pos_std, GPS_POS_FLOOR),
        odo_scale_std=max(s.odo_scale_std, ODO_SCALE_FLOOR),
        odo_floor_std=scenario.odo_floor_std,
        odo_nhc_std=scenario.odo_nhc_std,
    )


@dataclass(frozen=True)
class SimLogs:
    """One simulated run in log form."""

    imu: ImuLog
    aiding: GpsLog | OdoLog
    ref: RefLog


def simulate_truth(scenario: Scenario, em: EarthModel = WGS84) -> Truth:
    return generate_truth(
        scenario.profile, scenario.origin, scenario.dt, em,
        initial_yaw=scenario.initial_yaw, initial_speed=scenario.initial_speed,
    )


def simulate_logs(scenario: Scenario, seed: int, truth: Truth | None = None, em: EarthModel = WGS84) -> SimLogs:
    """Sensor logs of one run (truth is deterministic and may be shared)."""
    truth = simulate_truth(scenario, em) if truth is None else truth
    imu = synthesize_imu(truth, scenario.sensor, seed)
    if scenario.aiding == "gps":
        aid = synthesize_gps(truth, scenario.sensor, scenario.aiding_rate_hz, seed, em)
    else:
        aid = synthesize_odometer(truth, scenario.sensor, scenario.aiding_rate_hz, seed)
    return SimLogs(imu, aid, reference_log(truth, scenario.output_rate_hz, em))


def run_logs(
    scenario: Scenario,
    imu: ImuLog,
    aiding: GpsLog | OdoLog,
    ref: RefLog,
    seed: int,
    run: int = 0,
    filters: Sequence[str] | None = None,
    em: EarthModel = WGS84,
) -> list[RunResult]:
    """Run the requested filters on one set of logs."""
    filters = tuple(scenario.filters if filters is None else filters)
    dts = imu_intervals(imu.t)
    if np.any(dts > MAX_DT):
        raise LogFormatError(f"IMU interval {dts.max():.6g} s exceeds {MAX_DT} s")
    rs = ref_states(ref, em)
    if abs(rs.t[0] - imu.t[0]) > 1e-9:
        raise LogFormatError("REF log must start at the first IMU time stamp")
    out_ep, ok = epoch_index(imu.t, dts, rs.t)
    rows = np.flatnonzero(ok)
    out_ep = out_ep[ok]
    upd, ok = epoch_index(imu.t, dts, aiding.t)
    upd = upd[ok]
    if isinstance(aiding, GpsLog):
        if scenario.aiding != "gps":
            raise LogFormatError("odometer scenario given a GPS log")
        meas = gps_measurements(aiding, em)[ok]
        aid = "gps"
    else:
        if scenario.aiding != "odometer":
            raise LogFormatError("GPS scenario given an odometer log")
        meas = aiding.speed[ok, None]
        aid = "odometer"
    nav0, _ = initial_estimate(rs, scenario, seed, em)
    results = []
    for name in filters:
        cfg = filter_config(scenario, name)
        fr = run_filter(cfg, nav0, imu.gyro, imu.accel, dts, aid, upd, meas, out_ep, em)
        err = navigation_errors(fr, rs, rows, em)
        bias = np.column_stack([fr.x[:, 9:12] / DEG_PER_H, fr.x[:, 12:15] / MICRO_G])
        hyg = {
            "min_eig_ratio": fr.min_eig_ratio,
            "max_asymmetry": fr.max_asymmetry,
            "max_roundtrip": fr.max_roundtrip,
            "updates": float(fr.updates),
            "max_correction_deg": math.degrees(fr.max_correction_angle),
            "diverged_t": _epoch_time(imu.t, dts, fr.diverged_epoch) if fr.diverged else math.nan,
        }
        results.append(RunResult(name, run, seed, rs.t[rows].copy(), err, bias, hyg))
    return results


def run_scenario(
    scenario: Scenario,
    runs: int | None = None,
    seed: int | None = None,
    filters: Sequence[str] | None = None,
    em: EarthModel = WGS84,
) -> list[RunResult]:
    """Monte Carlo over runs ``r = 0 .. runs-1`` with ``seed_r = seed + r``.

    Results are ordered by run, then by filter.
    """
    runs = scenario.runs if runs is None else runs
    seed = scenario.seed if seed is None else seed
    if runs < 1:
        raise ValueError("runs must be >= 1")
    truth = simulate_truth(scenario, em)
    out: list[RunResult] = []
    for r in range(runs):
        sr = seed + r
        lg = simulate_logs(scenario, sr, truth, em)
        out.extend(run_logs(scenario, lg.imu, lg.aiding, lg.ref, sr, r, filters, em))
    return out


def export_logs(sim: SimLogs, out_dir: str | Path, aiding: str) -> dict[str, Path]:
    """Write IMU, aiding and REF CSVs; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"imu": out_dir / "imu.csv", "ref": out_dir / "ref.csv"}
    logs.write_imu(paths["imu"], sim.imu)
    logs.write_ref(paths["ref"], sim.ref)
    if aiding == "gps":
        paths["aiding"] = out_dir / "gps.csv"
        logs.write_gps(paths["aiding"], sim.aiding)
    else:
        paths["aiding"] = out_dir / "odo.csv"
        logs.write_odo(paths["aiding"], sim.aiding)
    return paths


def replay_logs(
    imu_path: str | Path,
    aiding_path: str | Path,
    ref_path: str | Path,
    cfg: Scenario,
    seed: int | None = None,
    max_gap: float | None = None,
    filters: Sequence[str] | None = None,
    em: EarthModel = WGS84,
) -> list[RunResult]:
    """Run the configured filters on CSV logs.

    ``cfg`` supplies the aiding type, filter settings and initial errors; the
    random misalignment (if any) is drawn from ``seed`` (default: the
    scenario seed). ``max_gap`` bounds the IMU time-stamp gaps in seconds.
    """
    seed = cfg.seed if seed is None else seed
    imu = logs.read_imu(imu_path, max_gap)
    aid = logs.read_aiding(aiding_path, cfg.aiding)
    ref = logs.read_ref(ref_path)
    return run_logs(cfg, imu, aid, ref, seed, 0, filters, em)


# --------------------------------------------------------------------------
# ensemble summary
# --------------------------------------------------------------------------
SUMMARY_STATS = ("rms", "mean", "p50_abs", "p95_abs", "max_abs", "diverged")


@dataclass(frozen=True)
class Summary:
    """Ensemble statistics per filter.

    ``curves[f]`` is the per-epoch RMS over runs (rows follow ``t``);
    ``terminal[f][stat]`` holds terminal-error statistics per column. Runs
    that diverged have NaN terminal errors, which propagate into every
    statistic except ``diverged`` (the count of NaN terminal values).
    """

    t: NDArray[np.float64]
    curves: dict[str, NDArray[np.float64]]
    terminal: dict[str, dict[str, NDArray[np.float64]]]
    runs: dict[str, int]

    def curves_csv(self) -> str:
        rows = []
        for i, name in enumerate(self.curves):
            c = self.curves[name]
            rows.append(np.column_stack([np.full(self.t.shape[0], i), self.t, c]))
        header = ("filter_index", "t") + tuple(f"rms_{c}" for c in ERROR_COLUMNS)
        return "# filters: " + ",".join(self.curves) + "\n" + logs.format_table(header, np.vstack(rows))

    def terminal_csv(self) -> str:
        lines = ["filter,stat," + ",".join(ERROR_COLUMNS)]
        for name, stats in self.terminal.items():
            for s in SUMMARY_STATS:
                lines.append(f"{name},{s}," + ",".join(logs.FLOAT_FMT % v for v in stats[s]))
        return "\n".join(lines) + "\n"


def summarize(results: Sequence[RunResult]) -> Summary:
    """Ensemble RMS curves and terminal statistics per filter."""
    if not results:
        raise ValueError("no results to summarize")
    by: dict[str, list[RunResult]] = {}
    for r in results:
        by.setdefault(r.filter, []).append(r)
    t = results[0].t
    curves: dict[str, NDArray] = {}
    terminal: dict[str, dict[str, NDArray]] = {}
    for name, rs in by.items():
        if any(r.t.shape != t.shape or np.any(r.t != t) for r in rs):
            raise ValueError("runs have different epochs")
        e = np.stack([r.errors for r in rs])
        curves[name] = np.sqrt(np.mean(e**2, axis=0))
        last = e[:, -1, :]
        a = np.abs(last)
        terminal[name] = {
            "rms": np.sqrt(np.mean(last**2, axis=0)),
            "mean": np.mean(last, axis=0),
            "p50_abs": np.percentile(a, 50, axis=0),
            "p95_abs": np.percentile(a, 95, axis=0),
            "max_abs": np.max(a, axis=0),
            "diverged": np.sum(np.isnan(last), axis=0).astype(np.float64),
        }
    return Summary(t.copy(), curves, terminal, {k: len(v) for k, v in by.items()})


def write_results(results: Sequence[RunResult], out_dir: str | Path) -> list[Path]:
    """One CSV per (run, filter) plus ``summary_curves.csv`` and ``summary_terminal.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        p = out_dir / f"run{r.run:04d}_{r.filter}.csv"
        p.write_text(r.csv(), encoding="utf-8", newline="\n")
        paths.append(p)
    s = summarize(results)
    for name, text in (("summary_curves.csv", s.curves_csv()), ("summary_terminal.csv", s.terminal_csv())):
        p = out_dir / name
        p.write_text(text, encoding="utf-8", newline="\n")
        paths.append(p)
    return paths
