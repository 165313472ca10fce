"""Optimal versus backpressure average cost on the small DP instances.

Writes V and the optimal action per state to CSV next to the printed table.
"""
import argparse
from pathlib import Path

from bpnet.dp import (asymptotic_policy, bp_policy, diamond_spec, drop_rate, evaluate_policy, optimal_policy,
                      relative_value_iteration, single_queue_spec, tandem_spec, write_policy_csv)

INSTANCES = {
    "single_queue": lambda: single_queue_spec(0.3, 10),
    "tandem": lambda: tandem_spec(0.4, 8),
    "diamond": lambda: diamond_spec(),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'instance':14s} {'states':>7s} {'optimal':>9s} {'BP':>9s} {'asymptotic':>10s} {'BP drops':>9s}")
    for name, make in INSTANCES.items():
        s = make()
        d, V = relative_value_iteration(s)
        opt = optimal_policy(s, V)
        bp = evaluate_policy(s, bp_policy(s))
        asym = evaluate_policy(s, asymptotic_policy(s, V))
        print(f"{name:14s} {s.num_states:7d} {d:9.5f} {bp:9.5f} {asym:10.5f} {drop_rate(s, bp_policy(s)):9.2e}")
        write_policy_csv(out / f"dp_{name}.csv", s, V, d, opt)


if __name__ == "__main__":
    main()
