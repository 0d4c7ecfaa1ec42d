"""Command-line front end: run one scenario, sweep a parameter grid, or
validate a scenario file without simulating.

Exit codes: 0 all runs healthy, 1 at least one simulation failed mid-run,
2 configuration problem (unreadable file, schema violation, bad override).
"""

import argparse
import itertools
import os
import sys

from .engine import run_scenario
from .errors import ScenarioError
from .scenario import load_scenario, with_overrides

__all__ = ["main"]


def _parser():
    p = argparse.ArgumentParser(
        prog="pvsagsim",
        description="Deterministic PV inverter voltage-sag simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario file")
    run.add_argument("scenario", help="scenario INI file")
    run.add_argument("--out", default=".", metavar="DIR",
                     help="output directory (default: current)")
    run.add_argument("--decimate", type=int, default=None, metavar="N",
                     help="keep every Nth sample in the time-series file")

    sweep = sub.add_parser(
        "sweep", help="run a scenario once per value of swept parameters")
    sweep.add_argument("scenario", help="template scenario INI file")
    sweep.add_argument("--param", action="append", default=[],
                       required=True, metavar="SECTION.KEY=A,B,...",
                       help="values to sweep; repeat for a full grid")
    sweep.add_argument("--out", default=".", metavar="DIR")
    sweep.add_argument("--decimate", type=int, default=None, metavar="N")

    val = sub.add_parser("validate",
                         help="check a scenario file, simulate nothing")
    val.add_argument("scenario", help="scenario INI file")
    return p


def _parse_param(spec: str):
    if "=" not in spec:
        raise ScenarioError(
            f"--param {spec!r} must look like section.key=value[,value...]")
    key, _, values = spec.partition("=")
    key = key.strip()
    if "." not in key:
        raise ScenarioError(
            f"--param key {key!r} must name a section.key pair")
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise ScenarioError(f"--param {spec!r} lists no values")
    return key, vals


def _slug(key: str, value: str) -> str:
    keep = "".join(c if c.isalnum() else "_" for c in value)
    return f"{key.split('.')[-1]}_{keep}"


def _execute(sc, out_dir: str) -> bool:
    """Run one scenario and write its output pair; True when healthy."""
    res = run_scenario(sc)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{res.name}.csv")
    met_path = os.path.join(out_dir, f"{res.name}_metrics.txt")
    res.write_csv(csv_path)
    res.write_metrics(met_path)
    print(f"wrote {csv_path}")
    print(f"wrote {met_path}")
    if res.failed:
        print(f"{res.name}: FAILED ({res.failure})", file=sys.stderr)
        return False
    return True


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    if args.decimate is not None:
        sc = with_overrides(sc, decimation=args.decimate)
    return 0 if _execute(sc, args.out) else 1


def _cmd_sweep(args) -> int:
    axes = [_parse_param(spec) for spec in args.param]
    ok = True
    for combo in itertools.product(*(vals for _, vals in axes)):
        overrides = {key: value
                     for (key, _), value in zip(axes, combo)}
        sc = load_scenario(args.scenario, overrides=overrides)
        suffix = "__".join(_slug(k, v) for k, v in overrides.items())
        sc = with_overrides(sc, name=f"{sc.name}__{suffix}")
        if args.decimate is not None:
            sc = with_overrides(sc, decimation=args.decimate)
        ok = _execute(sc, args.out) and ok
    return 0 if ok else 1


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{args.scenario}: ok "
          f"(name={sc.name}, duration={sc.duration}s, "
          f"grid={sc.grid.freq}Hz, sags={len(sc.grid.sags)})")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep,
               "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except (ScenarioError, ValueError) as exc:
        # bad file, bad override, or bad flag value: all config problems
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
