"""Directed multi-commodity network, link-rate model and topology generators."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NetworkGraph:
    """Directed graph with per-commodity destinations and allowed link sets.

    Nodes are the integers ``0..num_nodes-1`` and commodities ``0..C-1``.
    ``allowed`` is a ``C x L`` boolean matrix; row ``c`` is the link set L^(c).
    """

    num_nodes: int
    links: tuple[tuple[int, int], ...]
    dest: tuple[int, ...] = ()
    allowed: np.ndarray | None = None
    positions: dict[int, tuple[int, int, int]] = field(default_factory=dict)

    def __post_init__(self):
        links = tuple((int(a), int(b)) for a, b in self.links)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "dest", tuple(int(d) for d in self.dest))
        for a, b in links:
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < self.num_nodes and 0 <= b < self.num_nodes):
                raise ValueError(f"link {(a, b)} references an unknown node")
        if len(set(links)) != len(links):
            raise ValueError("duplicate directed link")
        for c, d in enumerate(self.dest):
            if not 0 <= d < self.num_nodes:
                raise ValueError(f"destination of commodity {c} is not a node")
        if self.allowed is None:
            allowed = np.ones((len(self.dest), len(links)), dtype=bool)
        else:
            allowed = np.asarray(self.allowed, dtype=bool)
            if allowed.shape != (len(self.dest), len(links)):
                raise ValueError("allowed must have shape (C, L)")
        allowed = allowed.copy()
        allowed.setflags(write=False)
        object.__setattr__(self, "allowed", allowed)
        tail = np.array([a for a, _ in links], dtype=np.int64)
        head = np.array([b for _, b in links], dtype=np.int64)
        tail.setflags(write=False)
        head.setflags(write=False)
        object.__setattr__(self, "_tail", tail)
        object.__setattr__(self, "_head", head)
        out_inc = np.zeros((self.num_nodes, len(links)))
        in_inc = np.zeros((self.num_nodes, len(links)))
        out_inc[tail, np.arange(len(links))] = 1.0
        in_inc[head, np.arange(len(links))] = 1.0
        object.__setattr__(self, "_out_inc", out_inc)
        object.__setattr__(self, "_in_inc", in_inc)
        # CSR layout of outgoing links, link indices ascending within a node
        object.__setattr__(self, "_out_order", np.argsort(tail, kind="stable"))
        out_ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(tail, minlength=self.num_nodes), out=out_ptr[1:])
        object.__setattr__(self, "_out_ptr", out_ptr)
        object.__setattr__(self, "_dest_arr", np.asarray(self.dest, dtype=np.int64))
        object.__setattr__(self, "_allowed_c", np.ascontiguousarray(allowed))
        object.__setattr__(self, "_in_order", np.argsort(head, kind="stable"))
        in_ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(head, minlength=self.num_nodes), out=in_ptr[1:])
        object.__setattr__(self, "_in_ptr", in_ptr)

    @property
    def N(self) -> int:
        return self.num_nodes

    @property
    def L(self) -> int:
        return len(self.links)

    @property
    def C(self) -> int:
        return len(self.dest)

    @property
    def tail(self) -> np.ndarray:
        return self._tail

    @property
    def head(self) -> np.ndarray:
        return self._head

    @property
    def out_incidence(self) -> np.ndarray:
        """``N x L``, 1 where the link leaves the node."""
        return self._out_inc

    @property
    def in_incidence(self) -> np.ndarray:
        return self._in_inc

    def link_index(self, a: int, b: int) -> int:
        return self.links.index((a, b))

    def links_per_commodity(self) -> np.ndarray:
        """L^(c) for every commodity."""
        return self.allowed.sum(axis=1)

    def dest_mask(self) -> np.ndarray:
        """``N x C`` boolean matrix, True where n == dest(c)."""
        mask = np.zeros((self.N, self.C), dtype=bool)
        mask[list(self.dest), np.arange(self.C)] = True
        return mask

    def with_commodities(self, dest, allowed=None) -> "NetworkGraph":
        return NetworkGraph(self.num_nodes, self.links, tuple(dest), allowed, dict(self.positions))

    def to_dict(self) -> dict:
        doc = {
            "num_nodes": self.num_nodes,
            "links": [list(l) for l in self.links],
            "dest": list(self.dest),
            "allowed": {
                str(c): [int(i) for i in np.flatnonzero(row)] for c, row in enumerate(self.allowed)
            },
        }
        if self.positions:
            doc["positions"] = {str(n): list(p) for n, p in sorted(self.positions.items())}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkGraph":
        links = [tuple(l) for l in doc["links"]]
        dest = doc.get("dest", [])
        allowed = None
        if "allowed" in doc:
            allowed = np.zeros((len(dest), len(links)), dtype=bool)
            for c, idx in doc["allowed"].items():
                allowed[int(c), idx] = True
        positions = {int(n): tuple(p) for n, p in doc.get("positions", {}).items()}
        return cls(int(doc["num_nodes"]), tuple(links), tuple(dest), allowed, positions)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "NetworkGraph":
        return cls.from_dict(json.loads(text))


def max_in_degree(graph: NetworkGraph) -> int:
    """Largest in-degree of any node within any commodity's allowed link set."""
    if graph.L == 0:
        return 0
    if graph.C == 0:
        return int(np.bincount(graph.head, minlength=graph.N).max())
    best = 0
    for c in range(graph.C):
        counts = np.bincount(graph.head[graph.allowed[c]], minlength=graph.N)
        best = max(best, int(counts.max()))
    return best


@dataclass(frozen=True)
class RateModel:
    """Finite topology states x finite resource actions -> per-link rates.

    ``rates[s, i, l]`` is the rate of link ``l`` in state ``s`` under action ``i``.
    Topology states are i.i.d. across slots with probabilities ``state_probs``.
    """

    rates: np.ndarray
    state_probs: np.ndarray
    action_names: tuple[str, ...] = ()

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        probs = np.asarray(self.state_probs, dtype=float)
        if rates.ndim != 3:
            raise ValueError("rates must be indexed [state, action, link]")
        if rates.shape[1] == 0:
            raise ValueError("empty resource action set")
        if probs.shape != (rates.shape[0],) or abs(probs.sum() - 1.0) > 1e-12 or (probs < 0).any():
            raise ValueError("state probabilities must be a distribution over states")
        if (rates < 0).any():
            raise ValueError("negative link rate")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "state_probs", probs)
        if not self.action_names:
            object.__setattr__(self, "action_names", tuple(f"I{i}" for i in range(rates.shape[1])))

    @property
    def num_states(self) -> int:
        return self.rates.shape[0]

    @property
    def num_actions(self) -> int:
        return self.rates.shape[1]

    @property
    def R_max(self) -> float:
        return float(self.rates.max()) if self.rates.size else 0.0

    @property
    def is_wireline(self) -> bool:
        return self.num_states == 1 and self.num_actions == 1

    def rate(self, graph: NetworkGraph, s: int, action: int, a: int, b: int) -> float:
        try:
            l = graph.link_index(a, b)
        except ValueError:
            return 0.0
        return float(self.rates[s, action, l])

    def out_rate_max(self, graph: NetworkGraph) -> np.ndarray:
        """mu^out_{n,max}: largest total outgoing rate of each node."""
        out = np.zeros((self.num_states, self.num_actions, graph.N))
        np.add.at(out, (slice(None), slice(None), graph.tail), self.rates)
        return out.max(axis=(0, 1)) if graph.L else np.zeros(graph.N)

    def in_rate_max(self, graph: NetworkGraph) -> np.ndarray:
        inn = np.zeros((self.num_states, self.num_actions, graph.N))
        np.add.at(inn, (slice(None), slice(None), graph.head), self.rates)
        return inn.max(axis=(0, 1)) if graph.L else np.zeros(graph.N)


def wireline_rate_model(graph: NetworkGraph, rate_per_link: float) -> RateModel:
    """All links active simultaneously at a fixed rate; one state, one action."""
    if rate_per_link <= 0:
        raise ValueError("rate_per_link must be positive")
    rates = np.full((1, 1, graph.L), float(rate_per_link))
    return RateModel(rates, np.array([1.0]), ("all-links",))


def build_clustered_grid(clusters: int, grid_side: int, random_links_per_cluster: int,
                         inter_cluster_links: int, seed: int = 0) -> NetworkGraph:
    """Square arrangement of square grid clusters with extra random links.

    Node id of (cluster k, local row i, local col j) is ``k*side^2 + i*side + j``;
    clusters are numbered row-major on the ``sqrt(clusters)`` square.  Random
    intra-cluster links are drawn uniformly, without replacement, over node
    pairs not already linked.  Each pair of adjacent clusters is joined by
    ``inter_cluster_links`` links between facing boundary nodes on uniformly
    chosen distinct rows (or columns).  Every undirected edge becomes two
    directed links.
    """
    if grid_side < 2:
        raise ValueError("grid_side must be at least 2")
    if clusters < 1 or int(round(clusters ** 0.5)) ** 2 != clusters:
        raise ValueError("clusters must be a positive perfect square")
    if random_links_per_cluster < 0 or inter_cluster_links < 0:
        raise ValueError("link counts must be non-negative")
    if inter_cluster_links > grid_side:
        raise ValueError("at most grid_side links between adjacent clusters")
    side = grid_side
    per = side * side
    k_side = int(round(clusters ** 0.5))
    rng = np.random.default_rng(seed)

    def nid(k, i, j):
        return k * per + i * side + j

    edges: list[tuple[int, int]] = []
    positions = {}
    for k in range(clusters):
        for i in range(side):
            for j in range(side):
                positions[nid(k, i, j)] = (k, i, j)
                if j + 1 < side:
                    edges.append((nid(k, i, j), nid(k, i, j + 1)))
                if i + 1 < side:
                    edges.append((nid(k, i, j), nid(k, i + 1, j)))
    existing = {frozenset(e) for e in edges}

    for k in range(clusters):
        members = [nid(k, i, j) for i in range(side) for j in range(side)]
        candidates = [p for p in itertools.combinations(members, 2) if frozenset(p) not in existing]
        if random_links_per_cluster > len(candidates):
            raise ValueError("not enough free node pairs for random links")
        pick = rng.choice(len(candidates), size=random_links_per_cluster, replace=False)
        for idx in sorted(pick):
            e = candidates[idx]
            edges.append(e)
            existing.add(frozenset(e))

    for kr in range(k_side):
        for kc in range(k_side):
            k = kr * k_side + kc
            if kc + 1 < k_side:  # right neighbour: our last column faces its first column
                rows = sorted(rng.choice(side, size=inter_cluster_links, replace=False))
                edges.extend((nid(k, r, side - 1), nid(k + 1, r, 0)) for r in rows)
            if kr + 1 < k_side:  # lower neighbour: our last row faces its first row
                cols = sorted(rng.choice(side, size=inter_cluster_links, replace=False))
                edges.extend((nid(k, side - 1, c), nid(k + k_side, 0, c)) for c in cols)

    links = []
    for a, b in edges:
        links.append((int(a), int(b)))
        links.append((int(b), int(a)))
    return NetworkGraph(clusters * per, tuple(links), (), None, positions)


def grid_node(row: int, col: int, clusters: int = 4, grid_side: int = 4, one_based: bool = True) -> int:
    """Map a global (row, col) on the assembled square grid to a node id."""
    if one_based:
        row, col = row - 1, col - 1
    k_side = int(round(clusters ** 0.5))
    total = k_side * grid_side
    if not (0 <= row < total and 0 <= col < total):
        raise ValueError(f"coordinate {(row, col)} outside the {total}x{total} grid")
    k = (row // grid_side) * k_side + col // grid_side
    return k * grid_side * grid_side + (row % grid_side) * grid_side + col % grid_side


def line_graph(n: int, bidirectional: bool = False) -> NetworkGraph:
    """Path 0 -> 1 -> ... -> n-1."""
    links = []
    for i in range(n - 1):
        links.append((i, i + 1))
        if bidirectional:
            links.append((i + 1, i))
    return NetworkGraph(n, tuple(links))
