"""Run stream bandwidth-allocation experiments from scenario files.

    python -m streambw --scenario ti_bottleneck --sweep --table --out runs/ti
"""
from __future__ import annotations

import argparse
import sys

from .runner import run_matrix
from .scenario import ScenarioError, bundled_scenarios, parse_scenario
from .sim.engine import ALLOCATORS, SimError


def _allocator(s: str) -> str:
    name = s.replace("-", "_")
    if name not in ALLOCATORS:
        raise argparse.ArgumentTypeError(
            f"unknown allocator {s!r}; choose from {', '.join(a.replace('_', '-') for a in ALLOCATORS)}")
    return name


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streambw", description=__doc__.splitlines()[0])
    p.add_argument("--scenario", help="scenario JSON path or bundled name")
    p.add_argument("--allocator", type=_allocator, action="append",
                   help="app-aware, maxmin-tcp or app-fair; repeatable (default: scenario list)")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--delta-t", type=float, dest="delta_t", help="allocation period in seconds")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, help="EWMA weight for app-fair (default: scenario alphas)")
    p.add_argument("--out", help="output directory for traces and tables")
    p.add_argument("--sweep", action="store_true",
                   help="run every capacity in the scenario sweep (default: the first one only)")
    p.add_argument("--table", action="store_true", help="print the comparison table")
    p.add_argument("--jobs", type=int, default=1, help="cells to run in parallel")
    p.add_argument("--list", action="store_true", help="list bundled scenarios and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print("\n".join(bundled_scenarios()))
        return 0
    if not args.scenario:
        print("error: --scenario is required", file=sys.stderr)
        return 2
    if args.alpha is not None and not 0 <= args.alpha <= 1:
        print(f"error: --alpha must be in [0, 1], got {args.alpha}", file=sys.stderr)
        return 2
    try:
        sc = parse_scenario(args.scenario)
        overrides = {"duration": args.duration, "alloc_period": args.delta_t, "seed": args.seed}
        for a in args.allocator or sc.allocators:
            sc.config(a, **overrides)  # fail fast on bad flag combinations
    except (ScenarioError, SimError, ValueError) as ex:
        print(f"invalid scenario:\n{ex}", file=sys.stderr)
        return 2
    table = run_matrix(sc, args.allocator, args.out, sweep=args.sweep, alpha=args.alpha,
                       jobs=args.jobs, **overrides)
    if args.table or not args.out:
        sys.stdout.write(table.to_text())
    for r in table.rows:
        if r["status"] != "ok":
            print(f"{r['allocator']} {r['capacity_mbps']}: {r['status']}", file=sys.stderr)
    return 1 if table.failed else 0


if __name__ == "__main__":
    sys.exit(main())
