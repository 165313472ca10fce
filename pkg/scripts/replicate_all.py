"""Run every bundled figure suite and print the headline numbers.

    python scripts/replicate_all.py --slots 100000 --out results
"""
import argparse
import time
from pathlib import Path

from bpnet.report import headline, plot_rows, run_scenario
from bpnet.scenario import FIGURES, shipped
from bpnet.sim import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=None, help="override the scenario slot count")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results")
    ap.add_argument("figures", nargs="*", default=list(FIGURES))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fig in args.figures:
        t0 = time.perf_counter()
        rows = run_scenario(shipped(fig), seed=args.seed, slots=args.slots, jobs=args.jobs)
        write_csv(out / f"{fig}.csv", rows)
        plot_rows(fig, rows, out / f"{fig}.png")
        print(f"== {fig}: {len(rows)} runs in {time.perf_counter() - t0:.0f}s")
        for line in headline(fig, rows):
            print("  " + line)


if __name__ == "__main__":
    main()
