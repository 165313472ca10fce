"""Stability-region membership, uniform margin and theta-optimal admitted rates.

Wireline networks only: the region is characterised by multicommodity flow
feasibility under fixed link capacities.  LPs are solved with HiGHS through
``scipy.optimize.linprog``; the concave utility program with cvxpy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .bias import hop_counts
from .graph import NetworkGraph

LP_TOL = 1e-9


class DisconnectedDemandError(ValueError):
    def __init__(self, commodities):
        self.commodities = sorted(set(int(c) for c in commodities))
        super().__init__(f"demand cannot reach the destination for commodities {self.commodities}")


class InfeasibleThetaError(ValueError):
    pass


@dataclass
class MarginResult:
    eps: float
    flows: np.ndarray          # L x C certifying flow
    demand: np.ndarray         # N x C
    active: np.ndarray         # N x C, where eps was added
    duality_gap: float

    @property
    def feasible(self) -> bool:
        """lambda lies in the (closed) stability region."""
        return self.eps >= -LP_TOL

    def to_dict(self, graph: NetworkGraph) -> dict:
        flows = [[int(graph.tail[l]), int(graph.head[l]), int(c), float(self.flows[l, c])]
                 for l, c in zip(*np.nonzero(self.flows > LP_TOL))]
        return {
            "eps": self.eps,
            "duality_gap": self.duality_gap,
            "demand": self.demand.tolist(),
            "active": self.active.astype(int).tolist(),
            "flows": flows,
        }

    def dumps(self, graph: NetworkGraph) -> str:
        return json.dumps(self.to_dict(graph), indent=1)


def _flow_index(graph: NetworkGraph):
    """Variable index for every allowed (link, commodity) pair."""
    pairs = np.argwhere(graph.allowed.T)  # rows (l, c)
    return pairs[:, 0], pairs[:, 1]


def _conservation(graph: NetworkGraph, ls: np.ndarray, cs: np.ndarray):
    """Sparse (out - in) operator from flow variables to live (n, c) rows."""
    live = ~graph.dest_mask()
    row_of = -np.ones((graph.N, graph.C), dtype=np.int64)
    row_of[live] = np.arange(live.sum())
    rows, cols, vals = [], [], []
    for j, (l, c) in enumerate(zip(ls, cs)):
        a, b = graph.tail[l], graph.head[l]
        if row_of[a, c] >= 0:
            rows.append(row_of[a, c]); cols.append(j); vals.append(1.0)
        if row_of[b, c] >= 0:
            rows.append(row_of[b, c]); cols.append(j); vals.append(-1.0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(int(live.sum()), len(ls)))
    return A, live


def _capacity(graph: NetworkGraph, ls: np.ndarray):
    return sp.csr_matrix((np.ones(len(ls)), (ls, np.arange(len(ls)))), shape=(graph.L, len(ls)))


def check_reachable(graph: NetworkGraph, need: np.ndarray):
    hops = hop_counts(graph)
    bad = np.argwhere(need & np.isinf(hops))
    if len(bad):
        raise DisconnectedDemandError(bad[:, 1])


def max_margin(graph: NetworkGraph, capacities, demand, active=None) -> MarginResult:
    """Largest uniform eps with demand + eps*active routable.

    ``active`` defaults to the pairs with positive demand.  A negative eps
    means the demand itself lies outside the stability region.
    """
    demand = np.asarray(demand, dtype=float)
    if (demand < 0).any():
        raise ValueError("negative demand")
    if active is None:
        active = demand > 0
    active = np.asarray(active, dtype=bool) & ~graph.dest_mask()
    if not active.any():
        raise ValueError("no active (node, commodity) pair to add the margin to")
    check_reachable(graph, active | (demand > 0))
    cap = np.broadcast_to(np.asarray(capacities, dtype=float), (graph.L,))
    ls, cs = _flow_index(graph)
    A_cons, live = _conservation(graph, ls, cs)
    eps_col = -active[live].astype(float)[:, None]
    A_eq = sp.hstack([A_cons, sp.csr_matrix(eps_col)]).tocsr()
    b_eq = demand[live]
    A_ub = sp.hstack([_capacity(graph, ls), sp.csr_matrix((graph.L, 1))]).tocsr()
    n = len(ls)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(0, None)] * n + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=cap, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"margin LP failed: {res.message}")
    dual = float(b_eq @ res.eqlin.marginals + cap @ res.ineqlin.marginals)
    flows = np.zeros((graph.L, graph.C))
    flows[ls, cs] = res.x[:n]
    return MarginResult(float(res.x[-1]), flows, demand, active, abs(res.fun - dual))


def routable(graph: NetworkGraph, capacities, demand) -> bool:
    """Is ``demand`` inside the (closed) stability region?"""
    demand = np.asarray(demand, dtype=float)
    if not (demand > 0).any():
        return True
    return max_margin(graph, capacities, demand).feasible


def all_pairs(graph: NetworkGraph) -> np.ndarray:
    """Every non-destination (node, commodity) pair that can reach its destination."""
    return np.isfinite(hop_counts(graph)) & ~graph.dest_mask()


def eps_z(graph: NetworkGraph, R_max: float, z) -> np.ndarray:
    """2 R_max L^(c) / z for every (node, commodity); zero for z = inf."""
    z = np.broadcast_to(np.asarray(z, dtype=float), (graph.N, graph.C))
    Lc = graph.links_per_commodity()[None, :].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.isinf(z), 0.0, 2.0 * R_max * Lc / z)


def split_margin(eps_max: float, eps_z_value: float) -> tuple[float, float]:
    """(eps, delta) = (eps_z + slack/2, slack/2) with slack = eps_max - eps_z."""
    slack = eps_max - eps_z_value
    if slack <= 0:
        raise ValueError(f"margin {eps_max:g} does not exceed eps_z {eps_z_value:g}")
    return eps_z_value + 0.5 * slack, 0.5 * slack


def theta_optimal_rates(graph: NetworkGraph, capacities, demand, theta=0.0, utility: str = "log",
                        utility_mask=None, weights=1.0) -> np.ndarray:
    """Admitted rates maximising total utility with rates + theta routable and 0 <= r <= demand.

    ``utility`` is "log" or "linear"; it counts on ``utility_mask`` (default:
    pairs with positive demand).
    """
    import cvxpy as cp

    demand = np.asarray(demand, dtype=float)
    shape = (graph.N, graph.C)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), shape).copy()
    theta[graph.dest_mask()] = 0.0
    mask = demand > 0 if utility_mask is None else np.asarray(utility_mask, dtype=bool)
    mask = mask & (demand > 0)
    check_reachable(graph, mask | (theta > 0))
    if (theta > 0).any() and not max_margin(graph, capacities, theta, theta > 0).feasible:
        raise InfeasibleThetaError("theta lies outside the stability region")
    cap = np.broadcast_to(np.asarray(capacities, dtype=float), (graph.L,))
    ls, cs = _flow_index(graph)
    A_cons, live = _conservation(graph, ls, cs)
    pos = np.argwhere(mask)
    col_of = {tuple(p): k for k, p in enumerate(pos)}
    # admitted rate variables only on masked pairs; other pairs admit nothing
    S = np.zeros((int(live.sum()), len(pos)))
    for k, (rr, cc) in enumerate(zip(*np.nonzero(live))):
        if (rr, cc) in col_of:
            S[k, col_of[(rr, cc)]] = 1.0
    f = cp.Variable(len(ls), nonneg=True)
    r = cp.Variable(len(pos), nonneg=True)
    w = np.broadcast_to(np.asarray(weights, dtype=float), shape)[mask]
    cons = [A_cons @ f == S @ r + theta[live], _capacity(graph, ls) @ f <= cap, r <= demand[mask]]
    if utility == "log":
        obj = cp.Maximize(cp.sum(cp.multiply(w, cp.log(r))))
    elif utility == "linear":
        obj = cp.Maximize(w @ r)
    else:
        raise ValueError(f"unknown utility {utility!r}")
    prob = cp.Problem(obj, cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise InfeasibleThetaError(f"utility program {prob.status}")
    out = np.zeros(shape)
    out[mask] = np.clip(r.value, 0.0, demand[mask])
    return out
