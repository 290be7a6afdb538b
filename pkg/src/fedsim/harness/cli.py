"""Command line: ``fedsim validate|run|sweep``.

Exit codes: 0 success, 1 invalid scenario, 2 usage error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from ..errors import ScenarioError
from .checklist import differentiate
from .report import IoError, fmt, report
from .scenario import load, require_valid, set_param, validate

EXIT_INVALID, EXIT_IO = 1, 3


def _load(path) -> dict:
    try:
        return load(path)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ScenarioError([f"{path}: not a valid document: {e}"]) from e


def cmd_validate(args) -> int:
    raw = _load(args.scenario)
    violations = validate(raw)
    if violations:
        for v in violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    d = differentiate(raw.get("checklist") or [])
    print(f"ok: {args.scenario}")
    for item in d.verified:
        print(f"  verified   {item.name} = {item.value}")
    for c in d.constraints:
        implied = ", ".join(f"{k}={v}" for k, v in c.implies)
        print(f"  constraint {c.name} = {c.value}" + (f" ({implied})" if implied else ""))
    return 0


def _run_one(raw: dict, seed, out: Path, trace: bool) -> dict:
    from ..simengine import run
    m = run(require_valid(raw), seed, trace=trace)
    report(m, out, trace=trace)
    return {"out": str(out), "total_cost": m.total_cost, "shortfall": m.shortfall,
            "sla_violation_rate": m.sla_violation_rate}


def cmd_run(args) -> int:
    raw = _load(args.scenario)
    res = _run_one(raw, args.seed, Path(args.out), args.trace)
    print(" ".join(f"{k}={fmt(v)}" for k, v in res.items()))
    return 0


def _parse_value(text: str):
    return yaml.safe_load(text)


def cmd_sweep(args) -> int:
    raw = _load(args.scenario)
    values = [_parse_value(v) for v in args.values.split(",")]
    jobs = []
    for i, v in enumerate(values):
        variant = set_param(raw, args.param, v)
        violations = validate(variant)
        if violations:
            for msg in violations:
                print(f"invalid ({args.param}={v}): {msg}", file=sys.stderr)
            return EXIT_INVALID
        jobs.append((variant, args.seed, Path(args.out) / f"{i:03d}", False))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    out = Path(args.out)
    try:
        with open(out / "sweep.csv", "w") as fp:
            fp.write(f"{args.param},out,total_cost,shortfall,sla_violation_rate\n")
            for v, r in zip(values, results):
                fp.write(",".join([fmt(v), r["out"], fmt(r["total_cost"]), fmt(r["shortfall"]),
                                   fmt(r["sla_violation_rate"])]) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {out / 'sweep.csv'}: {e}") from e
    for v, r in zip(values, results):
        print(json.dumps({args.param: v, **r}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedsim", description="Federated cloud provisioning simulator")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run a scenario and write report tables")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--trace", action="store_true", help="also dump event and bus traces")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run one scenario per value of a parameter")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="dotted key, e.g. scheduler.budget.amount")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default="sweep-out")
    s.add_argument("--jobs", type=int, default=1, help="parallel runs")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        for v in e.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    except IoError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
