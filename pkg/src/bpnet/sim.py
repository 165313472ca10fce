"""Slotted closed-loop simulation, parameter sweeps and run metrics."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .bias import BiasSpec
from .graph import NetworkGraph, RateModel
from .policy import Controller, PolicySpec, flow_control_admit, make_policy, utility
from .queues import (NEG_TOL, QueueInvariantError, QueueState, delivered as delivered_bits, resolve_transfers,
                     step_network_queues, step_transport_queues, step_virtual_queues)
from .traffic import BLOCK, ArrivalSampler, ArrivalSpec, mean_rates

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("lambda", "z", "B", "M")


@dataclass
class RunMetrics:
    slots: int
    warmup: int
    avg_total_backlog: float
    per_commodity_backlog: np.ndarray
    delivered: np.ndarray            # bits per commodity, whole run
    delivered_window: np.ndarray     # bits per commodity, after warmup
    admitted: np.ndarray             # N x C bits entering the network layer, whole run
    avg_admitted_rate: np.ndarray | None = None
    avg_auxiliary: np.ndarray | None = None
    utility_at_rbar: float = float("nan")
    utility_at_gammabar: float = float("nan")
    max_backlog: float = 0.0
    transport_drops: float = 0.0
    realized_max_arrival: float = 0.0
    initial_backlog: float = 0.0
    final_U: np.ndarray | None = None
    unreachable_pairs: int = 0
    runtime_ms: float = 0.0
    backlog_series: np.ndarray | None = field(default=None, repr=False)

    @property
    def window(self) -> int:
        return self.slots - self.warmup

    @property
    def throughput(self) -> np.ndarray:
        return self.delivered_window / self.window


def littles_law_delay(metrics: RunMetrics) -> tuple[np.ndarray, float]:
    """Average delay in slots per commodity and aggregate; ``nan`` where nothing was delivered."""
    thr = metrics.throughput
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(thr > 0, metrics.per_commodity_backlog / np.where(thr > 0, thr, 1.0), np.nan)
        per = np.where((metrics.per_commodity_backlog == 0) & (thr == 0), 0.0, per)
    total = thr.sum()
    if total > 0:
        agg = metrics.avg_total_backlog / total
    else:
        agg = 0.0 if metrics.avg_total_backlog == 0 else float("nan")
    return per, float(agg)


def _dynamic_terms(bias: BiasSpec):
    """Flatten the QSI-dependent bias into (kind code, z) terms; ``None`` for custom callables."""
    if bias.kind == "composite":
        terms = []
        for m in bias.members:
            sub = _dynamic_terms(m)
            if sub is None:
                return None
            terms += sub
        return terms
    if bias.kind == "custom":
        return None
    if bias.kind in ("next_hop", "min_downstream") and np.isfinite(bias.z):
        return [(1 if bias.kind == "next_hop" else 2, float(bias.z))]
    return []


def run(graph: NetworkGraph, rates: RateModel, arrivals: ArrivalSpec, policy: PolicySpec,
        slots: int, warmup: int | None = None, seed: int = 0, delta: float = 1.0,
        record_series: bool = False, initial_U: np.ndarray | None = None,
        engine: str = "auto") -> RunMetrics:
    """Simulate ``slots`` slots and return time-averaged metrics.

    Averages cover slots ``warmup..slots-1``; the backlog sampled for slot t
    is the state at its start.  Warmup defaults to 10% of the run.
    ``engine`` is "compiled", "python" (reference loop, also used for custom
    biases) or "auto".
    """
    if warmup is None:
        warmup = slots // 10
    if not slots > warmup >= 0:
        raise ValueError("need slots > warmup >= 0")
    if engine not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    arrivals.validate(graph)
    terms = _dynamic_terms(policy.bias)
    if engine == "compiled" and terms is None:
        raise ValueError("the compiled engine cannot run a custom bias")
    compiled = engine != "python" and terms is not None
    t0 = time.perf_counter()
    N, C = graph.N, graph.C
    fc = policy.flow_control
    state = QueueState.zeros(graph, fc.Q_max if fc else np.inf, delta)
    if initial_U is not None:
        state.U = np.asarray(initial_U, dtype=float).copy()
        state.U[graph.dest_mask()] = 0.0
    initial = float(state.U.sum())
    ctrl = Controller(graph, rates, policy)
    sampler = ArrivalSampler(arrivals, N, C, seed)
    topo_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x70B0]))

    # per-block float64 partial sums folded into extended-precision totals
    shapes = {"backlog": C, "delivered": C, "delivered_w": C, "admitted": (N, C), "r": (N, C), "g": (N, C),
              "drops": 1}
    totals = {k: np.zeros(v, dtype=np.longdouble) for k, v in shapes.items()}
    max_backlog = np.zeros(1)
    series = np.zeros(slots if record_series else 0)
    unreachable = 0
    if ctrl.static is not None:
        unreachable = int(np.isinf(ctrl.static).sum())
    warned = unreachable > 0
    if warned:
        log.warning("%d (node, commodity) pairs cannot reach their destination", unreachable)

    step = _run_compiled if compiled else _run_python
    for b in range((slots + BLOCK - 1) // BLOCK):
        start = b * BLOCK
        count = min(BLOCK, slots - start)
        A_blk = sampler.block(b, count)
        topo = (np.zeros(count, dtype=np.int64) if rates.num_states == 1
                else topo_rng.choice(rates.num_states, size=count, p=rates.state_probs))
        acc = {k: np.zeros(v) for k, v in shapes.items()}
        acc["stats"] = np.array([max_backlog[0], 0.0])
        step(graph, rates, policy, ctrl, terms, state, A_blk, topo, start, warmup, acc, series, delta)
        max_backlog[0] = acc["stats"][0]
        acc["drops"][0] = acc["stats"][1]
        for k in totals:
            totals[k] += acc[k]

    U = state.U
    if not warned and ctrl.dynamic and np.isinf(ctrl.bias(U)).any():
        unreachable = int(np.isinf(ctrl.bias(U)).sum())
        log.warning("%d (node, commodity) pairs cannot reach their destination", unreachable)

    window = slots - warmup
    tot = {k: np.asarray(v, dtype=float) for k, v in totals.items()}
    per_c = np.asarray(totals["backlog"] / window, dtype=float)
    metrics = RunMetrics(
        slots=slots, warmup=warmup,
        avg_total_backlog=float(per_c.sum()),
        per_commodity_backlog=per_c,
        delivered=tot["delivered"],
        delivered_window=tot["delivered_w"],
        admitted=tot["admitted"],
        max_backlog=float(max_backlog[0]),
        transport_drops=float(tot["drops"][0]),
        realized_max_arrival=sampler.realized_max,
        initial_backlog=initial,
        final_U=U,
        unreachable_pairs=unreachable,
        backlog_series=series if record_series else None,
    )
    if fc is not None:
        rbar = np.asarray(totals["r"] / window, dtype=float)
        gbar = np.asarray(totals["g"] / window, dtype=float)
        metrics.avg_admitted_rate = rbar
        metrics.avg_auxiliary = gbar
        metrics.utility_at_rbar = utility(fc, rbar)
        metrics.utility_at_gammabar = utility(fc, gbar)
    metrics.runtime_ms = 1e3 * (time.perf_counter() - t0)
    return metrics


def _run_compiled(graph, rates, policy, ctrl, terms, state, A_blk, topo, start, warmup, acc, series, delta):
    fc = policy.flow_control
    shape = (graph.N, graph.C)
    static = ctrl.static if ctrl.static is not None else np.zeros(shape)
    if fc is not None:
        util_code = {"log": 0, "linear": 1, "none": 2}[fc.utility]
        fc_args = (True, util_code, float(fc.M), float(fc.weight),
                   np.ascontiguousarray(fc.r_max_matrix(shape), dtype=float), np.ascontiguousarray(fc.mask(shape)))
    else:
        fc_args = (False, 2, 1.0, 1.0, np.zeros(shape), np.zeros(shape, dtype=bool))
    bad = _kernels.run_block(
        graph.tail, graph.head, graph._allowed_c, graph._in_ptr, graph._in_order, graph._out_ptr, graph._out_order, graph._dest_arr,
        np.ascontiguousarray(rates.rates, dtype=float), topo.astype(np.int64), np.ascontiguousarray(static),
        np.array([k for k, _ in terms], dtype=np.int64), np.array([z for _, z in terms], dtype=float),
        state.U, state.Q, state.Y, state.Q_max, *fc_args, float(delta), A_blk, start, warmup,
        acc["backlog"], acc["delivered"], acc["delivered_w"], acc["admitted"], acc["r"], acc["g"],
        acc["stats"], series, NEG_TOL)
    if bad >= 0:
        raise QueueInvariantError(f"slot {bad}: negative backlog")


def _run_python(graph, rates, policy, ctrl, terms, state, A_blk, topo, start, warmup, acc, series, delta):
    fc = policy.flow_control
    for k in range(A_blk.shape[0]):
        t = start + k
        A = A_blk[k]
        U, Q, Y = state.U, state.Q, state.Y
        col = U.sum(axis=0)
        total = float(col.sum())
        acc["stats"][0] = max(acc["stats"][0], total)
        if series.size:
            series[t] = total
        if t >= warmup:
            acc["backlog"] += col
        if fc is not None:
            r, gamma = flow_control_admit(Q, U, Y, fc, delta)
            inflow = r
        else:
            inflow = A
        try:
            _, mu = ctrl.offered_rates(U, int(topo[k]))
        except ValueError as exc:
            raise ValueError(f"slot {t}: {exc}") from exc
        nu = resolve_transfers(graph, U, mu, delta)
        try:
            state.U = step_network_queues(graph, U, nu, inflow, delta)
        except QueueInvariantError as exc:
            raise QueueInvariantError(f"slot {t}: {exc}") from exc
        if fc is not None:
            overflow = np.maximum(Q - r * delta + A * delta - state.Q_max, 0.0)
            acc["stats"][1] += float(overflow.sum())
            state.Q = step_transport_queues(Q, r, A, state.Q_max, delta)
            state.Y = step_virtual_queues(Y, r, gamma, delta)
            if t >= warmup:
                acc["r"] += r
                acc["g"] += gamma
        got = delivered_bits(graph, nu, delta)
        acc["delivered"] += got
        acc["admitted"] += inflow * delta
        if t >= warmup:
            acc["delivered_w"] += got


@dataclass
class Experiment:
    """One fully specified run."""

    graph: NetworkGraph
    rates: RateModel
    arrivals: ArrivalSpec
    policy: PolicySpec
    slots: int = 100_000
    warmup: int | None = None
    seed: int = 0
    name: str = "run"
    lam: float = float("nan")

    def run(self) -> RunMetrics:
        return run(self.graph, self.rates, self.arrivals, self.policy, self.slots, self.warmup, self.seed)


def derive_seed(base: int, value: float, replication: int) -> int:
    ss = np.random.SeedSequence([int(base), int(round(float(value) * 1_000_000)) & 0xFFFFFFFF, int(replication)])
    return int(ss.generate_state(1)[0])


def with_parameter(exp: Experiment, parameter: str, value: float) -> Experiment:
    p = exp.policy
    if parameter == "lambda":
        return replace(exp, arrivals=exp.arrivals.scaled_to(value), lam=float(value))
    if parameter == "z":
        return replace(exp, policy=make_policy(p.algorithm, value, p.B, p.flow_control, p.bias))
    if parameter == "B":
        return replace(exp, policy=make_policy(p.algorithm, p.z, value, p.flow_control, p.bias))
    if parameter == "M":
        if p.flow_control is None:
            raise ValueError("M sweep needs flow control")
        return replace(exp, policy=replace(p, flow_control=replace(p.flow_control, M=float(value))))
    raise ValueError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")


def _run_row(item):
    exp, parameter, value, rep = item
    return parameter, value, rep, exp, exp.run()


def sweep(base: Experiment, parameter: str, values, replications: int = 1, jobs: int = 1):
    """Grid of runs keyed by (value, replication) with independent derived seeds.

    Returns a list of ``(value, replication, Experiment, RunMetrics)``.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")
    items = []
    for v in values:
        for rep in range(replications):
            exp = replace(with_parameter(base, parameter, v), seed=derive_seed(base.seed, v, rep))
            items.append((exp, parameter, v, rep))
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_row, items))
    else:
        done = [_run_row(i) for i in items]
    return [(v, rep, exp, m) for _, v, rep, exp, m in done]


def csv_row(scenario_id: str, exp: Experiment, m: RunMetrics) -> dict:
    p = exp.policy
    lam = exp.lam
    if np.isnan(lam):
        rates = mean_rates(exp.arrivals, exp.graph.N, exp.graph.C)
        active = rates[rates > 0]
        lam = float(active.mean()) if active.size else 0.0
    _, delay = littles_law_delay(m)
    row = {
        "scenario": scenario_id,
        "policy": p.label,
        "algorithm": p.algorithm,
        "lambda": lam,
        "z": p.z,
        "B": p.B,
        "M": p.flow_control.M if p.flow_control else "",
        "seed": exp.seed,
        "slots": m.slots,
        "avg_total_backlog": m.avg_total_backlog,
    }
    for c, b in enumerate(m.per_commodity_backlog):
        row[f"backlog_c{c}"] = b
    if m.avg_admitted_rate is not None:
        for c, r in enumerate(m.avg_admitted_rate.sum(axis=0)):
            row[f"rbar_c{c}"] = r
    row["utility_at_rbar"] = m.utility_at_rbar
    row["utility_at_gammabar"] = m.utility_at_gammabar
    row["delay"] = delay
    row["runtime_ms"] = round(m.runtime_ms, 1)
    return row


def write_csv(path, rows: list[dict]):
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
