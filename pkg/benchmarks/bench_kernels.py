"""Compiled kernels against the pure-numpy fallback.

Each path runs in its own interpreter because the choice is made at import
time from ``SE23NAV_DISABLE_NUMBA``. Usage::

    python3 benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from se23nav._jit import NUMBA_ENABLED
from se23nav.earth import Geodetic
from se23nav.filter import run_filter
from se23nav.harness.run import filter_config
from se23nav.harness.scenario import bundled_scenarios, load_scenario
from se23nav.mechanization import propagate_stream, to_transformed
from se23nav.simulator import generate_truth, static_profile

steps, repeat = int(sys.argv[1]), int(sys.argv[2])
dt = 0.01
tr = generate_truth(static_profile(steps * dt), Geodetic.from_degrees(30.5, 114.3, 20.0), dt)
sc = load_scenario(bundled_scenarios()["gps_small_misalignment"])
upd = np.arange(0, steps + 1, 100)
meas = np.hstack([tr.vel[upd], tr.pos[upd]])
dts = np.full(steps, dt)

def best(fn):
    fn()  # compile / warm up
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    return min(t)

out = {"numba": NUMBA_ENABLED, "steps": steps}
out["mechanization"] = best(lambda: propagate_stream(to_transformed(tr.nav(0)), tr.gyro, tr.accel, dt))
for f in ("lse", "rse", "so"):
    cfg = filter_config(sc, f)
    out["filter_" + f] = best(lambda: run_filter(cfg, tr.nav(0), tr.gyro, tr.accel, dts, "gps", upd, meas,
                                                  np.array([steps])))
print(json.dumps(out))
"""


def run(disable: bool, steps: int, repeat: int) -> dict:
    env = dict(os.environ, SE23NAV_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(steps), str(repeat)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000, help="IMU epochs per call (100 Hz)")
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    fast = run(False, a.steps, a.repeat)
    slow = run(True, a.steps, a.repeat)
    if not fast["numba"]:
        print("numba unavailable: both columns use the fallback")
    print(f"{'kernel':<16}{'numba s':>10}{'numpy s':>10}{'speed-up':>10}   ({a.steps} epochs, best of {a.repeat})")
    for k in ("mechanization", "filter_lse", "filter_rse", "filter_so"):
        print(f"{k:<16}{fast[k]:>10.4f}{slow[k]:>10.3f}{slow[k] / fast[k]:>10.0f}x")


if __name__ == "__main__":
    main()
