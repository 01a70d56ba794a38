"""Scenarios, logs, the run pipeline and the command line."""
from __future__ import annotations

import copy
import math
import warnings

import numpy as np
import pytest

from se23nav.earth import Geodetic, ecef_to_ned_rotation, euler_to_dcm
from se23nav.errors import GimbalLockWarning, LogFormatError, ScenarioError
from se23nav.harness import logs
from se23nav.harness.cli import EXIT_LOG, EXIT_USAGE, main
from se23nav.harness.run import (
    RunResult,
    attitude_error_angles,
    export_logs,
    replay_logs,
    run_logs,
    run_scenario,
    simulate_logs,
    summarize,
    write_results,
)
from se23nav.harness.scenario import bundled_scenarios, load_scenario, scenario_from_dict

DOC = {
    "name": "tiny",
    "aiding": "gps",
    "runs": 2,
    "seed": 11,
    "origin": {"lat_deg": 30.5, "lon_deg": 114.3, "height_m": 20.0},
    "profile": {"kind": "static", "duration_s": 20},
    "sensor": {
        "gyro_bias_deg_h": 0.01,
        "gyro_arw_deg_sqrt_h": 0.001,
        "accel_bias_ug": 25.0,
        "accel_vrw_ug_sqrt_hz": 10.0,
        "gps_vel_std": 0.1,
        "gps_pos_std": 10.0,
    },
    "init_error": {"mode": "random", "attitude_std_deg": [5.0, 5.0, 20.0]},
    "init_covariance": {"attitude_std_deg": [5.0, 5.0, 20.0]},
}


@pytest.fixture(scope="module")
def tiny():
    return scenario_from_dict(copy.deepcopy(DOC))


def with_(path, value):
    doc = copy.deepcopy(DOC)
    *head, last = path
    t = doc
    for k in head:
        t = t.setdefault(k, {})
    t[last] = value
    return doc


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------
@pytest.mark.parametrize(
    "path, value, field",
    [
        (("sensor", "gyro_bias_deg_h"), -1.0, "sensor.gyro_bias_deg_h"),
        (("sensor", "bogus"), 1.0, "sensor.bogus"),
        (("aiding",), "radar", "aiding"),
        (("filters",), ["lse", "ekf"], "filters[1]"),
        (("origin", "lat_deg"), 89.5, "origin.lat_deg"),
        (("profile", "duration_s"), 1.005, "profile.segments[0].duration"),
        (("init_covariance", "attitude_std_deg"), [1.0, 2.0], "init_covariance.attitude_std_deg"),
        (("init_error", "attitude_std_deg"), [1.0, -2.0, 3.0], "init_error.attitude_std_deg[1]"),
        (("imu_rate_hz",), 50, "imu_rate_hz"),
        (("aiding_rate_hz",), 3, "aiding_rate_hz"),
    ],
)
def test_scenario_errors_name_the_field(path, value, field):
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(with_(path, value))
    assert exc.value.field == field


def test_segment_errors_carry_their_index():
    doc = with_(("profile",), {"kind": "segments", "segments": [{"duration": 1}, {"duration": 1, "wz": 1, "ax": 9}]})
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.field == "profile.segments[1]"


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert {"gps_static_large", "gps_small_misalignment", "odo_land_vehicle", "odo_alignment_large",
            "odo_alignment_extreme"} <= set(names)
    for p in names.values():
        sc = load_scenario(p)
        assert sc.duration > 0
    assert load_scenario(names["odo_land_vehicle"]).duration == 18880.0


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.toml")
    (tmp_path / "bad.toml").write_text("name = [")
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "bad.toml")


# --------------------------------------------------------------------------
# logs
# --------------------------------------------------------------------------
def test_log_roundtrip_is_exact(tiny, tmp_path):
    lg = simulate_logs(tiny, 5)
    paths = export_logs(lg, tmp_path, "gps")
    imu = logs.read_imu(paths["imu"])
    gps = logs.read_gps(paths["aiding"])
    ref = logs.read_ref(paths["ref"])
    assert np.array_equal(imu.gyro, lg.imu.gyro) and np.array_equal(imu.accel, lg.imu.accel)
    assert np.array_equal(imu.t, lg.imu.t)
    assert np.array_equal(gps.lat_deg, lg.aiding.lat_deg) and np.array_equal(gps.vel_ned, lg.aiding.vel_ned)
    assert np.array_equal(ref.yaw_deg, lg.ref.yaw_deg)


def test_malformed_logs_are_rejected(tiny, tmp_path):
    lg = simulate_logs(tiny, 5)
    p = export_logs(lg, tmp_path, "gps")["imu"]
    text = p.read_text()
    bad = tmp_path / "bad.csv"
    # truncated mid-row
    bad.write_text(text[: len(text) // 2].rsplit(",", 1)[0] + "\n")
    with pytest.raises(LogFormatError):
        logs.read_imu(bad)
    bad.write_text(text.replace("t,gx", "time,gx", 1))
    with pytest.raises(LogFormatError):
        logs.read_imu(bad)
    lines = text.splitlines()
    bad.write_text("\n".join([lines[0], lines[2], lines[1]] + lines[3:]) + "\n")
    with pytest.raises(LogFormatError):
        logs.read_imu(bad)
    bad.write_text("\n".join(lines[:10] + lines[20:]) + "\n")
    with pytest.raises(LogFormatError):
        logs.read_imu(bad, max_gap=0.05)
    bad.write_text(lines[0] + "\n" + lines[1].replace(",", ",x", 1) + "\n")
    with pytest.raises(LogFormatError):
        logs.read_imu(bad)
    with pytest.raises(LogFormatError):
        logs.read_imu(tmp_path / "missing.csv")


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------
def test_replay_is_bit_identical_to_simulation(tiny, tmp_path):
    lg = simulate_logs(tiny, tiny.seed)
    direct = run_logs(tiny, lg.imu, lg.aiding, lg.ref, tiny.seed)
    paths = export_logs(lg, tmp_path, "gps")
    replayed = replay_logs(paths["imu"], paths["aiding"], paths["ref"], tiny)
    for a, b in zip(direct, replayed):
        assert a.filter == b.filter
        assert a.csv() == b.csv()


def test_runs_are_deterministic(tiny, tmp_path):
    a = run_scenario(tiny)
    b = run_scenario(tiny)
    assert [r.csv() for r in a] == [r.csv() for r in b]
    pa = write_results(a, tmp_path / "a")
    pb = write_results(b, tmp_path / "b")
    assert [p.read_bytes() for p in pa] == [p.read_bytes() for p in pb]
    # distinct seeds give distinct runs
    assert a[0].csv() != a[3].csv()


def test_wrong_aiding_log_is_rejected(tiny):
    lg = simulate_logs(tiny, 1)
    odo_sc = scenario_from_dict(with_(("aiding",), "odometer"))
    with pytest.raises(LogFormatError):
        run_logs(odo_sc, lg.imu, lg.aiding, lg.ref, 1)


def result(name, values, t=(0.0, 1.0)):
    e = np.zeros((len(t), 9))
    e[-1] = values
    return RunResult(name, 0, 0, np.array(t), e, np.zeros((len(t), 6)))


def test_summary_statistics():
    s = summarize([result("lse", 3.0), result("lse", 4.0)])
    assert np.allclose(s.terminal["lse"]["rms"], math.sqrt(12.5))
    assert np.allclose(s.terminal["lse"]["mean"], 3.5)
    assert np.allclose(s.terminal["lse"]["max_abs"], 4.0)
    assert np.all(s.terminal["lse"]["diverged"] == 0)
    s = summarize([result("rse", 1.0), result("rse", np.nan)])
    assert np.all(s.terminal["rse"]["diverged"] == 1)
    with pytest.raises(ValueError):
        summarize([])
    with pytest.raises(ValueError):
        summarize([result("so", 1.0), result("so", 1.0, t=(0.0, 2.0))])


def test_attitude_error_angles():
    at = Geodetic.from_degrees(30.0, 114.0, 0.0)
    Cne = ecef_to_ned_rotation(at).T
    truth = Cne @ euler_to_dcm(0.1, 0.2, 0.3)
    est = Cne @ euler_to_dcm(0.0, 0.0, math.radians(10.0)) @ euler_to_dcm(0.1, 0.2, 0.3)
    assert np.allclose(attitude_error_angles(est, truth, at), [0.0, 0.0, 10.0], atol=1e-12)
    est = Cne @ euler_to_dcm(0.0, math.radians(-5.0), 0.0) @ euler_to_dcm(0.1, 0.2, 0.3)
    assert np.allclose(attitude_error_angles(est, truth, at), [-5.0, 0.0, 0.0], atol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(GimbalLockWarning):
            attitude_error_angles(Cne @ euler_to_dcm(0.0, math.radians(89.5), 0.0), Cne, at)


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------
def test_cli_scenario_error(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('name = "x"\naiding = "radar"\n')
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: scenario: aiding:")


def test_cli_log_error(tmp_path, capsys):
    bad = tmp_path / "imu.csv"
    bad.write_text("t,gx,gy,gz,ax,ay\n0,0,0,0,0,0\n")
    rc = main(["replay", "--scenario", "gps_small_misalignment", "--imu", str(bad), "--aiding", str(bad),
               "--ref", str(bad), "--out", str(tmp_path / "o")])
    assert rc == EXIT_LOG
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("error: log: ")


def test_cli_simulate_writes_results(tmp_path, capsys):
    toml = tmp_path / "tiny.toml"
    toml.write_text(TINY_TOML)
    out = tmp_path / "o"
    assert main(["simulate", "--scenario", str(toml), "--runs", "1", "--filters", "lse,so", "--out", str(out),
                 "--export-logs", "--quiet"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["logs", "run0000_lse.csv", "run0000_so.csv", "summary_curves.csv", "summary_terminal.csv"]
    assert main(["simulate", "--scenario", str(toml), "--filters", "ekf", "--out", str(out)]) == EXIT_USAGE
    lg = out / "logs" / "run0000"
    assert main(["replay", "--scenario", str(toml), "--imu", str(lg / "imu.csv"), "--aiding", str(lg / "gps.csv"),
                 "--ref", str(lg / "ref.csv"), "--filters", "lse,so", "--out", str(tmp_path / "r"), "--quiet"]) == 0
    for f in ("run0000_lse.csv", "run0000_so.csv"):
        assert (out / f).read_bytes() == (tmp_path / "r" / f).read_bytes()


TINY_TOML = """
name = "tiny"
aiding = "gps"
runs = 2
seed = 11

[origin]
lat_deg = 30.5
lon_deg = 114.3
height_m = 20.0

[profile]
kind = "static"
duration_s = 20

[sensor]
gyro_bias_deg_h = 0.01
gyro_arw_deg_sqrt_h = 0.001
accel_bias_ug = 25.0
accel_vrw_ug_sqrt_hz = 10.0
gps_vel_std = 0.1
gps_pos_std = 10.0

[init_error]
mode = "random"
attitude_std_deg = [5.0, 5.0, 20.0]

[init_covariance]
attitude_std_deg = [5.0, 5.0, 20.0]
"""
