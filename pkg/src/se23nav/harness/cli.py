"""Command line entry point.

::

    se23nav simulate --scenario FILE [--runs N] [--seed S] [--filters lse,rse,so] --out DIR [--export-logs]
    se23nav replay   --scenario FILE --imu IMU.csv --aiding AID.csv --ref REF.csv --out DIR
    se23nav verify   [--quick]

On failure the last line on stderr is ``error: <kind>: <message>`` and the
exit code is nonzero (2 usage/config, 3 log format, 4 numerical, 1 other).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import ConvergenceError, DomainError, FilterError, LogFormatError, ScenarioError
from .scenario import FILTER_NAMES, bundled_scenarios, load_scenario

EXIT_USAGE, EXIT_LOG, EXIT_NUMERIC, EXIT_OTHER = 2, 3, 4, 1


def _filters(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    names = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in names if f not in FILTER_NAMES]
    if not names or bad:
        raise ScenarioError("--filters", f"expected a comma list of {','.join(FILTER_NAMES)}")
    return names


def _scenario(path: str):
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        if path in bundled:
            p = bundled[path]
    return load_scenario(p)


def _cmd_simulate(a: argparse.Namespace) -> int:
    from .run import export_logs, run_logs, simulate_logs, simulate_truth, write_results

    sc = _scenario(a.scenario)
    filters = _filters(a.filters)
    if filters is not None:
        sc = replace(sc, filters=filters)
    runs = sc.runs if a.runs is None else a.runs
    seed = sc.seed if a.seed is None else a.seed
    if runs < 1:
        raise ScenarioError("--runs", "must be >= 1")
    out = Path(a.out)
    truth = simulate_truth(sc)
    results = []
    for r in range(runs):
        lg = simulate_logs(sc, seed + r, truth)
        if a.export_logs:
            export_logs(lg, out / "logs" / f"run{r:04d}", sc.aiding)
        res = run_logs(sc, lg.imu, lg.aiding, lg.ref, seed + r, r)
        results.extend(res)
        if not a.quiet:
            terms = "  ".join(f"{x.filter}: yaw {x.terminal[2]:+.4f} deg" for x in res)
            print(f"run {r}: {terms}", flush=True)
    paths = write_results(results, out)
    if not a.quiet:
        print(f"wrote {len(paths)} files to {out}")
    return 0


def _cmd_replay(a: argparse.Namespace) -> int:
    from .run import replay_logs, write_results

    sc = _scenario(a.scenario)
    res = replay_logs(a.imu, a.aiding, a.ref, sc, a.seed, a.max_gap, _filters(a.filters))
    paths = write_results(res, a.out)
    if not a.quiet:
        for r in res:
            print(f"{r.filter}: terminal pitch/roll/yaw {r.terminal[0]:+.4f} {r.terminal[1]:+.4f} {r.terminal[2]:+.4f} deg")
        print(f"wrote {len(paths)} files to {a.out}")
    return 0


def _cmd_verify(a: argparse.Namespace) -> int:
    from .verify import run_all

    checks = run_all(quick=a.quick)
    for c in checks:
        print(c.line(), flush=True)
    failed = [c for c in checks if not c.passed]
    if failed:
        print(f"error: verify: {len(failed)} of {len(checks)} checks failed", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="se23nav", description="SE_2(3) INS/GPS and INS/odometer experiments")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo simulation of a scenario")
    s.add_argument("--scenario", required=True, help="scenario TOML file or bundled scenario name")
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--filters", help="comma list of lse,rse,so")
    s.add_argument("--out", required=True)
    s.add_argument("--export-logs", action="store_true", help="also write IMU/aiding/REF CSVs per run")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(fn=_cmd_simulate)

    r = sub.add_parser("replay", help="run filters on CSV logs")
    r.add_argument("--scenario", required=True, help="filter and initial-error settings")
    r.add_argument("--imu", required=True)
    r.add_argument("--aiding", required=True)
    r.add_argument("--ref", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--max-gap", type=float, help="largest allowed IMU time-stamp gap (s)")
    r.add_argument("--filters", help="comma list of lse,rse,so")
    r.add_argument("--out", required=True)
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(fn=_cmd_replay)

    v = sub.add_parser("verify", help="group-affine, log-linearity, Lie and Jacobian checks")
    v.add_argument("--quick", action="store_true", help="smaller sample counts")
    v.set_defaults(fn=_cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.fn(a)
    except ScenarioError as exc:
        print(f"error: scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LogFormatError as exc:
        print(f"error: log: {exc}", file=sys.stderr)
        return EXIT_LOG
    except (FilterError, ConvergenceError, DomainError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
