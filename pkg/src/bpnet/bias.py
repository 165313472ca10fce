"""Bias functions added to queue lengths in the backpressure differential.

A QSI-dependent bias has the form f_n(u) = sum_k eta_nk(u) u_k / z with
weights eta in [0, 1].  Two instances are provided in closed form:

* next hop:        f_n = min over next hops k of u_k, divided by z
* min downstream:  f_n = min over paths n -> dest of the summed backlog of
                   the path nodes after n, divided by z (Bellman-Ford with
                   per-link cost equal to the backlog at the receiving node)

Ties inside the minimum would split eta evenly among the minimisers, which
leaves the value unchanged, so only the plain minimum is computed.
The shortest-path bias is QSI-independent: B times the hop count.
Unreachable (node, commodity) pairs carry ``inf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .graph import NetworkGraph

KINDS = ("zero", "next_hop", "min_downstream", "shortest_path", "composite", "custom")


def bias_next_hop(graph: NetworkGraph, U: np.ndarray, z: float) -> np.ndarray:
    if z <= 0:
        raise ValueError("z must be positive")
    h = _kernels.min_next_hop(graph.tail, graph.head, graph._allowed_c, np.asarray(U, dtype=float), graph.N)
    h[~np.isfinite(h)] = 0.0  # no outgoing commodity link
    if graph.C:
        h[graph.dest, np.arange(graph.C)] = 0.0
    return h / z


def downstream_sums(graph: NetworkGraph, U: np.ndarray) -> np.ndarray:
    """T*_n^(c): least total backlog over paths n -> dest(c), excluding n itself."""
    return _kernels.bellman_ford(graph.tail, graph.head, graph._in_ptr, graph._in_order, graph._allowed_c,
                                 np.asarray(U, dtype=float), graph._dest_arr)


def bias_min_downstream(graph: NetworkGraph, U: np.ndarray, z: float) -> np.ndarray:
    if z <= 0:
        raise ValueError("z must be positive")
    return downstream_sums(graph, U) / z


def hop_counts(graph: NetworkGraph) -> np.ndarray:
    """Hop distance from every node to each destination inside L^(c) (BFS)."""
    N, C = graph.N, graph.C
    hops = np.full((N, C), np.inf)
    for c in range(C):
        preds = [[] for _ in range(N)]
        for l in np.flatnonzero(graph.allowed[c]):
            preds[graph.head[l]].append(int(graph.tail[l]))
        frontier = [graph.dest[c]]
        hops[graph.dest[c], c] = 0
        while frontier:
            nxt = []
            for b in frontier:
                for a in preds[b]:
                    if hops[a, c] == np.inf:
                        hops[a, c] = hops[b, c] + 1
                        nxt.append(a)
            frontier = nxt
    return hops


def bias_shortest_path(graph: NetworkGraph, B: float) -> np.ndarray:
    if B < 0:
        raise ValueError("B must be non-negative")
    hops = hop_counts(graph)
    return np.where(np.isfinite(hops), B * np.where(np.isfinite(hops), hops, 0.0), np.inf)


def min_z(R_max: float, d_in: int, eps_min: float) -> float:
    """Smallest z for which next-hop / min-downstream bias keep throughput optimality."""
    if eps_min <= 0:
        raise ValueError("eps_min must be positive; with no margin the bias must be disabled")
    return 2.0 * R_max * d_in / eps_min


def eta_next_hop(graph: NetworkGraph, U: np.ndarray) -> np.ndarray:
    """Weights eta[c, n, k]: 1/#ties on the minimum next-hop backlogs, else 0."""
    N, C = graph.N, graph.C
    eta = np.zeros((C, N, N))
    h = _kernels.min_next_hop(graph.tail, graph.head, graph._allowed_c, np.asarray(U, dtype=float), N)
    for c in range(C):
        for l in np.flatnonzero(graph.allowed[c]):
            a, b = graph.tail[l], graph.head[l]
            if a != graph.dest[c] and U[b, c] == h[a, c]:
                eta[c, a, b] = 1.0
        rows = eta[c].sum(axis=1, keepdims=True)
        np.divide(eta[c], rows, out=eta[c], where=rows > 0)
    return eta


def general_bias(U: np.ndarray, eta: np.ndarray, z) -> np.ndarray:
    """f_n^(c) = sum_k eta[c, n, k] * U[k, c] / z[k, c]  (z scalar or N x C)."""
    z = np.broadcast_to(np.asarray(z, dtype=float), U.shape)
    return np.einsum("cnk,kc->nc", eta, U / z)


@dataclass(frozen=True)
class BiasSpec:
    """Which bias to add.  ``custom`` wraps ``fn(graph, U) -> N x C``."""

    kind: str = "zero"
    z: float = np.inf
    B: float = 0.0
    members: tuple["BiasSpec", ...] = ()
    fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bias kind {self.kind!r}")
        if self.kind in ("next_hop", "min_downstream") and not self.z > 0:
            raise ValueError("z must be positive")
        if self.B < 0:
            raise ValueError("B must be non-negative")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom bias needs fn")

    @property
    def is_dynamic(self) -> bool:
        if self.kind == "composite":
            return any(m.is_dynamic for m in self.members)
        return self.kind in ("next_hop", "min_downstream", "custom") and np.isfinite(self.z)

    def dynamic(self, graph: NetworkGraph, U: np.ndarray) -> np.ndarray:
        """QSI-dependent part of the bias."""
        if self.kind == "composite":
            total = np.zeros((graph.N, graph.C))
            for m in self.members:
                total = total + m.dynamic(graph, U)
            return total
        if self.kind == "custom":
            return np.asarray(self.fn(graph, U), dtype=float)
        if self.kind in ("next_hop", "min_downstream") and not np.isfinite(self.z):
            return np.zeros((graph.N, graph.C))
        if self.kind == "next_hop":
            return bias_next_hop(graph, U, self.z)
        if self.kind == "min_downstream":
            return bias_min_downstream(graph, U, self.z)
        return np.zeros((graph.N, graph.C))

    def static(self, graph: NetworkGraph) -> np.ndarray:
        """QSI-independent part (shortest-path terms)."""
        if self.kind == "composite":
            total = np.zeros((graph.N, graph.C))
            for m in self.members:
                total = total + m.static(graph)
            return total
        if self.kind == "shortest_path":
            return bias_shortest_path(graph, self.B)
        return np.zeros((graph.N, graph.C))

    def __call__(self, graph: NetworkGraph, U: np.ndarray) -> np.ndarray:
        return self.dynamic(graph, U) + self.static(graph)
