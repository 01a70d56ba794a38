"""The pure-numpy path (SE23NAV_DISABLE_NUMBA=1) agrees with the compiled one."""
from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

SCRIPT = r"""
import json, sys
import numpy as np
from se23nav import _jit
from se23nav.harness.run import run_logs, simulate_logs
from se23nav.harness.scenario import scenario_from_dict
from se23nav.harness.verify import group_affine_relative, lie_roundtrip_error

doc = {
    "name": "fallback", "aiding": "gps", "seed": 3,
    "origin": {"lat_deg": 30.5, "lon_deg": 114.3, "height_m": 20.0},
    "profile": {"kind": "segments", "initial_speed": 5.0, "segments": [
        {"duration": 3, "status": "CS"}, {"duration": 3, "wz": 0.9, "ax": -9.0, "status": "LT"}]},
    "sensor": {"gyro_bias_deg_h": 0.01, "gyro_arw_deg_sqrt_h": 0.001, "accel_bias_ug": 25.0,
               "accel_vrw_ug_sqrt_hz": 10.0, "gps_vel_std": 0.1, "gps_pos_std": 10.0},
    "init_error": {"mode": "fixed", "attitude_deg": [2.0, -2.0, 10.0]},
    "init_covariance": {"attitude_std_deg": [2.0, 2.0, 10.0]},
}
sc = scenario_from_dict(doc)
lg = simulate_logs(sc, sc.seed)
res = run_logs(sc, lg.imu, lg.aiding, lg.ref, sc.seed)
json.dump({
    "numba": _jit.NUMBA_ENABLED,
    "errors": {r.filter: r.errors.tolist() for r in res},
    "gyro": lg.imu.gyro[-1].tolist(),
    "affine": float(group_affine_relative(20, 1, False).max()),
    "lie": max(lie_roundtrip_error(200)),
}, sys.stdout)
"""


def run(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("SE23NAV_DISABLE_NUMBA", None)
    if disable:
        env["SE23NAV_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, timeout=900)
    assert out.returncode == 0, out.stderr
    return json.loads(out.stdout)


@pytest.mark.slow
def test_numpy_fallback_matches_compiled_kernels():
    fast = run(False)
    slow = run(True)
    assert fast["numba"] and not slow["numba"]
    # the truth inversion differs only by rounding (libm, fused multiply-add)
    assert np.allclose(fast["gyro"], slow["gyro"], rtol=0, atol=1e-12)
    for name in fast["errors"]:
        a = np.array(fast["errors"][name])
        b = np.array(slow["errors"][name])
        # attitude (deg), position (m; ECEF coordinates near 6e6 m), velocity (m/s)
        tol = np.array([1e-8] * 3 + [1e-6] * 3 + [1e-8] * 3)
        assert np.all(np.abs(a - b) < tol), name
    assert slow["affine"] < 1e-9 and slow["lie"] < 1e-9
