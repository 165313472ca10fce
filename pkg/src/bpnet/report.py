"""Scenario execution into CSV rows, headline ratios and static plots."""
from __future__ import annotations

import numpy as np

from . import __version__
from .graph import max_in_degree
from .bias import min_z
from .margin import DisconnectedDemandError, all_pairs, eps_z, max_margin, split_margin
from .policy import InfeasibleMarginError, theorem1_bound
from .scenario import Scenario
from .sim import csv_row, sweep
from .traffic import max_arrivals, mean_rates


def run_scenario(sc: Scenario, seed: int | None = None, slots: int | None = None, jobs: int = 1,
                 replications: int | None = None, labels=None) -> list[dict]:
    """One CSV row per (policy, sweep value, replication).

    ``labels`` restricts the run to policies with those labels.  Without a
    sweep each policy runs once with the scenario seed.
    """
    rows = []
    base_seed = sc.engine.get("seed", 0) if seed is None else seed
    for exp in sc.experiments(seed=base_seed, slots=slots):
        if labels is not None and exp.policy.label not in labels:
            continue
        if sc.sweep is None:
            out = [(None, 0, exp, exp.run())]
        else:
            reps = replications or sc.sweep.get("replications", 1)
            out = sweep(exp, sc.sweep["parameter"], sc.sweep["values"], reps, jobs)
        for value, rep, e, m in out:
            row = csv_row(sc.name, e, m)
            row["replication"] = rep
            row["version"] = __version__
            rows.append(row)
    return rows


def _mean_by(rows, key):
    table: dict = {}
    for r in rows:
        table.setdefault((r["policy"], r[key]), []).append(r)
    return table


def backlog_table(rows, key="lambda") -> dict:
    """{policy: {x: mean avg_total_backlog over replications}}."""
    out: dict = {}
    for (pol, x), rs in _mean_by(rows, key).items():
        out.setdefault(pol, {})[x] = float(np.mean([r["avg_total_backlog"] for r in rs]))
    return out


def max_ratio(rows, policy: str, baseline: str = "bp", key: str = "lambda") -> float:
    """max over the sweep of mean backlog(policy) / mean backlog(baseline)."""
    t = backlog_table(rows, key)
    return max(t[policy][x] / t[baseline][x] for x in t[baseline])


def headline(fig: str, rows) -> list[str]:
    lines = []
    if fig in ("fig2", "fig3", "fig4"):
        z = {"fig2": 1, "fig3": 1, "fig4": 5}[fig]
        names = ([f"bpnxt z={z:g}", f"bpmin z={z:g}"] if fig == "fig2"
                 else [f"bpnxtbias z={z:g} B=1", f"bpminbias z={z:g} B=1"])
        labels = {r["policy"] for r in rows}
        for name in names:
            if name in labels:
                lines.append(f"max over lambda of backlog {name} / bp = {max_ratio(rows, name):.3f}")
    else:
        t = _mean_by(rows, "M")
        for (pol, M), rs in sorted(t.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            u = np.mean([r["utility_at_rbar"] for r in rs])
            b = np.mean([r["avg_total_backlog"] for r in rs])
            lines.append(f"{pol:24s} M={M:<6g} utility={u:9.4f} backlog={b:12.2f}")
    return lines


def plot_rows(fig: str, rows, path, title: str | None = None):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_obj, ax = plt.subplots(figsize=(6.5, 4.2))
    if fig in ("fig5", "fig6") or (rows and rows[0].get("M") not in ("", None) and
                                   len({r["M"] for r in rows}) > 1):
        t = _mean_by(rows, "M")
        for pol in sorted({p for p, _ in t}):
            Ms = sorted(M for p, M in t if p == pol)
            u = [np.mean([r["utility_at_rbar"] for r in t[(pol, M)]]) for M in Ms]
            b = [np.mean([r["avg_total_backlog"] for r in t[(pol, M)]]) for M in Ms]
            ax.plot(u, b, marker="o", label=pol)
        ax.set_xlabel("sum utility of admitted rates")
        ax.set_ylabel("average packets in network")
    else:
        t = backlog_table(rows)
        for pol, curve in t.items():
            xs = sorted(curve)
            ax.plot(xs, [curve[x] for x in xs], marker="o", label=pol)
        ax.set_xlabel("arrival rate per commodity")
        ax.set_ylabel("average packets in network")
        ax.set_yscale("log")
    ax.legend(fontsize=7)
    ax.set_title(title or f"{fig} (bpnet {__version__})", fontsize=9)
    fig_obj.tight_layout()
    fig_obj.savefig(path, dpi=120)
    plt.close(fig_obj)


def margin_report(sc: Scenario) -> tuple[list[str], bool]:
    """Human-readable margin analysis and whether the demand is routable."""
    g, rates, arrivals, policies = sc.build()
    lam = mean_rates(arrivals, g.N, g.C)
    sources = np.zeros((g.N, g.C), dtype=bool)
    for n, c, _ in arrivals.entries:
        sources[n, c] = True
    lines = []
    try:
        res = max_margin(g, sc.link_rate, lam, sources)
    except DisconnectedDemandError as exc:
        return [f"infeasible: no path to the destination for commodities {exc.commodities}"], False
    d_in = max_in_degree(g)
    R_max = rates.R_max
    lines.append(f"nodes={g.N} links={g.L} commodities={g.C} d_in={d_in} R_max={R_max:g}")
    lines.append(f"routable: {'yes' if res.feasible else 'no'}")
    lines.append(f"max uniform margin eps = {res.eps:.6g} (duality gap {res.duality_gap:.1e})")
    bounded = np.isfinite(max_arrivals(arrivals, g.N, g.C)).all()
    eps_all = None
    if res.feasible and bounded:
        eps_all = max_margin(g, sc.link_rate, lam, all_pairs(g)).eps
    for p in policies:
        parts = [f"{p.label}:"]
        if np.isfinite(p.z):
            ez = float(eps_z(g, R_max, p.z).max())
            parts.append(f"eps_z={ez:.4g}")
        else:
            ez = 0.0
        if res.eps > 0:
            parts.append(f"min_z={min_z(R_max, d_in, res.eps):.4g}")
        if eps_all is None:
            parts.append("theorem1_bound=n/a" + ("" if bounded else " (unbounded arrivals)"))
        else:
            try:
                e, d = split_margin(eps_all, ez)
                bound = theorem1_bound(g, rates, max_arrivals(arrivals, g.N, g.C), e, d, p.z)
                parts.append(f"theorem1_bound={bound:.6g}")
            except (ValueError, InfeasibleMarginError) as exc:
                parts.append(f"theorem1_bound=n/a ({exc})")
        lines.append(" ".join(parts))
    return lines, res.feasible

