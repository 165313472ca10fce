"""Command-line front end: ``bpnet run|replicate|margin``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .queues import QueueInvariantError
from .report import headline, margin_report, plot_rows, run_scenario
from .scenario import FIGURES, Scenario, ScenarioError, shipped
from .sim import write_csv

OUT_ENV = "BPNET_OUT"


def _load(path):
    try:
        return Scenario.load(path)
    except FileNotFoundError:
        raise ScenarioError("$", f"no such file {path}")


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    sc = _load(args.file)
    rows = run_scenario(sc, seed=args.seed, slots=args.slots, jobs=args.jobs)
    out = _out_dir(args)
    path = Path(args.csv) if args.csv else out / sc.output.get("csv", f"{sc.name}.csv")
    write_csv(path, rows)
    print(f"wrote {len(rows)} rows to {path}")
    if args.plot:
        img = out / sc.output.get("plot", f"{sc.name}.png")
        plot_rows(sc.name, rows, img)
        print(f"wrote {img}")
    return 0


def cmd_replicate(args) -> int:
    sc = shipped(args.figure)
    rows = run_scenario(sc, seed=args.seed, slots=args.slots, jobs=args.jobs, replications=args.replications)
    out = _out_dir(args)
    path = Path(args.csv) if args.csv else out / f"{args.figure}.csv"
    write_csv(path, rows)
    img = out / f"{args.figure}.png"
    plot_rows(args.figure, rows, img)
    print(f"wrote {path} and {img}")
    for line in headline(args.figure, rows):
        print(line)
    return 0


def cmd_margin(args) -> int:
    sc = _load(args.file)
    if args.lam is not None:
        for com in sc.commodities:
            com["arrival"] = {"kind": "poisson", "rate": args.lam}
        sc.validate()
    lines, feasible = margin_report(sc)
    print("\n".join(lines))
    return 0 if feasible else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bpnet", description="Backpressure routing simulator and analysis tools")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("file")
    r.add_argument("--csv", help="CSV path (default: <out>/<scenario csv name>)")
    r.add_argument("--plot", action="store_true", help="also write a static plot")
    r.add_argument("--seed", type=int)
    r.add_argument("--slots", type=int)
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("replicate", help="run a bundled figure suite")
    f.add_argument("figure", choices=FIGURES)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--slots", type=int)
    f.add_argument("--replications", type=int)
    f.add_argument("--csv")
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_replicate)

    m = sub.add_parser("margin", help="stability margin and bias parameter report")
    m.add_argument("file")
    m.add_argument("--lambda", dest="lam", type=float, help="override every commodity's mean rate")
    m.set_defaults(func=cmd_margin)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    except QueueInvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
