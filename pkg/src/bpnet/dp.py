"""Exact average-cost control on tiny truncated networks.

Queues live on the integer lattice ``0..queue_cap`` (one unit per bit).
A slot applies the chosen transfers, then arrivals; arrivals beyond the cap
are dropped and counted.  The per-slot cost is the total backlog at the
start of the slot.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import NetworkGraph, RateModel
from .policy import allocate_resources, compute_backpressure, route
from .queues import resolve_transfers

MAX_STATES = 1_000_000
TIE_TOL = 1e-9


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"no convergence after {iterations} iterations (span residual {residual:.3e})")


class MultichainError(RuntimeError):
    """The policy splits the lattice into several closed classes."""

    def __init__(self, class_averages: list[float]):
        self.class_averages = class_averages
        super().__init__(f"policy has {len(class_averages)} recurrent classes with averages {class_averages}")


@dataclass
class MdpSpec:
    """Truncated controlled chain.

    ``arrivals`` maps (node, commodity) to a pmf over 0, 1, 2, ... units per
    slot.  Link capacities per slot are ``R * delta`` and must be integers.
    """

    graph: NetworkGraph
    rates: RateModel
    arrivals: dict
    queue_cap: int
    delta: float = 1.0
    pairs: list = field(init=False)
    states: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.graph
        if self.queue_cap < 1:
            raise ValueError("queue_cap must be at least 1")
        dmask = g.dest_mask()
        self.pairs = [(int(n), int(c)) for n, c in zip(*np.nonzero(~dmask))]
        size = (self.queue_cap + 1) ** len(self.pairs)
        if size > MAX_STATES:
            raise ValueError(f"state space {size} exceeds {MAX_STATES}")
        pmfs = {}
        for (n, c), pmf in self.arrivals.items():
            pmf = np.asarray(pmf, dtype=float)
            if (pmf < 0).any() or abs(pmf.sum() - 1.0) > 1e-12:
                raise ValueError(f"arrival pmf at {(n, c)} is not a distribution")
            if dmask[n, c]:
                raise ValueError(f"arrivals at the destination of commodity {c}")
            pmfs[(int(n), int(c))] = pmf
        self.arrivals = pmfs
        caps = self.rates.rates * self.delta
        if not np.allclose(caps, np.round(caps)):
            raise ValueError("link capacities per slot must be integers")
        self._caps = np.round(caps).astype(int)
        grids = np.indices((self.queue_cap + 1,) * len(self.pairs)).reshape(len(self.pairs), -1).T
        self.states = grids.astype(np.int64)
        self._radix = (self.queue_cap + 1) ** np.arange(len(self.pairs))[::-1]
        self._build()

    # lattice helpers
    @property
    def num_states(self) -> int:
        return len(self.states)

    def index(self, u) -> int:
        return int(np.asarray(u) @ self._radix)

    def to_matrix(self, u) -> np.ndarray:
        U = np.zeros((self.graph.N, self.graph.C))
        for k, (n, c) in enumerate(self.pairs):
            U[n, c] = u[k]
        return U

    def cost(self) -> np.ndarray:
        return self.states.sum(axis=1).astype(float)

    def _build(self):
        g = self.graph
        P = len(self.pairs)
        pos = {p: k for k, p in enumerate(self.pairs)}
        # joint arrival outcomes
        keys = list(self.arrivals)
        supports = [np.flatnonzero(self.arrivals[k] > 0) for k in keys]
        self.arrival_vecs, self.arrival_probs = [], []
        for combo in itertools.product(*supports):
            vec = np.zeros(P, dtype=np.int64)
            prob = 1.0
            for key, a in zip(keys, combo):
                vec[pos[key]] = a
                prob *= self.arrivals[key][a]
            self.arrival_vecs.append(vec)
            self.arrival_probs.append(prob)
        self.arrival_vecs = np.array(self.arrival_vecs).reshape(-1, P)
        self.arrival_probs = np.array(self.arrival_probs)
        # candidate actions per topology state: (I, integer transfers L x C)
        self.actions = []
        for s in range(self.rates.num_states):
            acts = []
            for I in range(self.rates.num_actions):
                per_link = []
                for l in range(g.L):
                    cs = np.flatnonzero(g.allowed[:, l])
                    cap = self._caps[s, I, l]
                    opts = []
                    for split in itertools.product(range(cap + 1), repeat=len(cs)):
                        if sum(split) <= cap:
                            x = np.zeros(g.C, dtype=np.int64)
                            x[cs] = split
                            opts.append(x)
                    per_link.append(opts)
                for combo in itertools.product(*per_link):
                    acts.append((I, np.array(combo, dtype=np.int64).reshape(g.L, g.C)))
            self.actions.append(acts)
        self._lookup = [{(I, x.tobytes()): k for k, (I, x) in enumerate(acts)} for acts in self.actions]
        # per action: required backlog and net change on the lattice
        S = self.num_states
        cap = self.queue_cap
        self._next, self._admissible, self._drops = [], [], []
        for acts in self.actions:
            nxt = np.empty((len(acts), len(self.arrival_probs), S), dtype=np.int64)
            adm = np.empty((len(acts), S), dtype=bool)
            drops = np.zeros((len(acts), S))
            for k, (_, x) in enumerate(acts):
                need = np.zeros(P, dtype=np.int64)
                change = np.zeros(P, dtype=np.int64)
                for l in range(g.L):
                    a, b = g.tail[l], g.head[l]
                    for c in np.flatnonzero(x[l]):
                        if (a, c) in pos:
                            need[pos[(a, c)]] += x[l, c]
                            change[pos[(a, c)]] -= x[l, c]
                        if (b, c) in pos:
                            change[pos[(b, c)]] += x[l, c]
                adm[k] = (self.states >= need).all(axis=1)
                base = self.states + change
                for j, vec in enumerate(self.arrival_vecs):
                    raw = base + vec
                    clipped = np.clip(raw, 0, cap)
                    nxt[k, j] = clipped @ self._radix
                    drops[k] += self.arrival_probs[j] * np.maximum(raw - cap, 0).sum(axis=1)
            self._next.append(nxt)
            self._admissible.append(adm)
            self._drops.append(drops)

    def expected_next(self, V: np.ndarray, s: int) -> np.ndarray:
        """E[V(u')] for every (action, state); ``inf`` where the action is inadmissible."""
        ev = np.tensordot(self.arrival_probs, V[self._next[s]], axes=(0, 1))
        return np.where(self._admissible[s], ev, np.inf)

    def action_index(self, s: int, I: int, x: np.ndarray) -> int:
        return self._lookup[s][(int(I), np.asarray(x, dtype=np.int64).tobytes())]


@dataclass
class PolicyTable:
    """Action index per (topology state, lattice state)."""

    spec: MdpSpec
    table: np.ndarray  # S x num_states

    def action(self, s: int, u) -> tuple[int, np.ndarray]:
        return self.spec.actions[s][self.table[s, self.spec.index(u)]]

    def __eq__(self, other):
        return isinstance(other, PolicyTable) and np.array_equal(self.table, other.table)


def bellman_operator(spec: MdpSpec, V: np.ndarray) -> np.ndarray:
    out = np.zeros(spec.num_states)
    for s, p in enumerate(spec.rates.state_probs):
        out += p * spec.expected_next(V, s).min(axis=0)
    return spec.cost() + out


def relative_value_iteration(spec: MdpSpec, tol: float = 1e-10, max_iters: int = 200_000,
                             damping: float = 0.5) -> tuple[float, np.ndarray]:
    """Solve d + V = T V with V(0) = 0; damping makes the iteration aperiodic."""
    V = np.zeros(spec.num_states)
    residual = np.inf
    for it in range(max_iters):
        TV = bellman_operator(spec, V)
        diff = TV - V
        residual = float(diff.max() - diff.min())
        if residual < tol:
            return float(diff[0]), V - V[0]
        V = (1.0 - damping) * V + damping * TV
        V -= V[0]
    raise ConvergenceError(residual, max_iters)


def bellman_residual(spec: MdpSpec, d: float, V: np.ndarray) -> float:
    return float(np.max(np.abs(bellman_operator(spec, V) - V - d)))


def _first_min(ev: np.ndarray) -> np.ndarray:
    best = ev.min(axis=0)
    close = ev <= best + TIE_TOL * (1.0 + np.abs(best))
    return np.argmax(close, axis=0)


def optimal_policy(spec: MdpSpec, V: np.ndarray) -> PolicyTable:
    """Greedy in E[V(u')]; the first admissible action wins ties."""
    return PolicyTable(spec, np.array([_first_min(spec.expected_next(V, s))
                                       for s in range(spec.rates.num_states)]))


def _weight_policy(spec: MdpSpec, weights) -> PolicyTable:
    g = spec.graph
    table = np.zeros((spec.rates.num_states, spec.num_states), dtype=np.int64)
    for i, u in enumerate(spec.states):
        U = spec.to_matrix(u)
        bp = compute_backpressure(g, weights(i, U))
        for s in range(spec.rates.num_states):
            I = allocate_resources(spec.rates, s, bp)
            mu = route(bp, spec.rates.rates[s, I], g.C)
            nu = resolve_transfers(g, U, mu, spec.delta)
            x = np.round(nu * spec.delta).astype(np.int64)
            table[s, i] = spec.action_index(s, I, x)
    return PolicyTable(spec, table)


def bp_policy(spec: MdpSpec) -> PolicyTable:
    """Plain backpressure on the lattice (idles on links with zero differential)."""
    return _weight_policy(spec, lambda i, U: U)


def value_derivatives(spec: MdpSpec, V: np.ndarray) -> np.ndarray:
    """Lattice surrogate of dV/du per pair: central differences, one-sided at the edges."""
    cap = spec.queue_cap
    D = np.zeros((spec.num_states, len(spec.pairs)))
    for k, r in enumerate(spec._radix):
        u = spec.states[:, k]
        up = np.where(u < cap, np.arange(spec.num_states) + r, np.arange(spec.num_states))
        dn = np.where(u > 0, np.arange(spec.num_states) - r, np.arange(spec.num_states))
        width = (u < cap).astype(float) + (u > 0)
        D[:, k] = (V[up] - V[dn]) / np.where(width > 0, width, 1.0)
    return D


def asymptotic_policy(spec: MdpSpec, V: np.ndarray) -> PolicyTable:
    """Backpressure on V' differences, capped to the available backlog."""
    D = value_derivatives(spec, V)
    return _weight_policy(spec, lambda i, U: spec.to_matrix(D[i]))


def transition_matrix(spec: MdpSpec, policy: PolicyTable) -> sp.csr_matrix:
    S = spec.num_states
    rows, cols, vals = [], [], []
    idx = np.arange(S)
    for s, ps in enumerate(spec.rates.state_probs):
        acts = policy.table[s]
        if not spec._admissible[s][acts, idx].all():
            raise ValueError("policy picks an inadmissible action")
        for j, pa in enumerate(spec.arrival_probs):
            rows.append(idx)
            cols.append(spec._next[s][acts, j, idx])
            vals.append(np.full(S, ps * pa))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(S, S))


def _stationary(P: sp.csr_matrix) -> np.ndarray:
    n = P.shape[0]
    A = (P.T - sp.identity(n)).tolil()
    A[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    return sp.linalg.spsolve(A.tocsc(), b)


def stationary_distribution(spec: MdpSpec, policy: PolicyTable) -> np.ndarray:
    P = transition_matrix(spec, policy)
    ncomp, labels = connected_components(P, directed=True, connection="strong")
    closed = []
    for k in range(ncomp):
        members = np.flatnonzero(labels == k)
        sub = P[members]
        if np.isclose(sub[:, members].sum(), len(members)):
            closed.append(members)
    pis = []
    for members in closed:
        pi = np.zeros(spec.num_states)
        pi[members] = _stationary(P[members][:, members])
        pis.append(pi)
    if len(pis) > 1:
        raise MultichainError([float(pi @ spec.cost()) for pi in pis])
    return pis[0]


def evaluate_policy(spec: MdpSpec, policy: PolicyTable) -> float:
    """Exact long-run average of the total backlog under ``policy``."""
    return float(stationary_distribution(spec, policy) @ spec.cost())


def drop_rate(spec: MdpSpec, policy: PolicyTable) -> float:
    """Expected units dropped at the cap per slot."""
    pi = stationary_distribution(spec, policy)
    idx = np.arange(spec.num_states)
    per = sum(p * spec._drops[s][policy.table[s], idx] for s, p in enumerate(spec.rates.state_probs))
    return float(pi @ per)


def simulate_policy(spec: MdpSpec, policy: PolicyTable, slots: int, seed: int = 0) -> float:
    """Monte Carlo average backlog from the empty state."""
    rng = np.random.default_rng(seed)
    arr = rng.choice(len(spec.arrival_probs), size=slots, p=spec.arrival_probs)
    top = rng.choice(spec.rates.num_states, size=slots, p=spec.rates.state_probs)
    cost = spec.cost()
    tables = [spec._next[s][policy.table[s], :, np.arange(spec.num_states)] for s in range(spec.rates.num_states)]
    x = 0
    total = 0.0
    for t in range(slots):
        total += cost[x]
        x = tables[top[t]][x, arr[t]]
    return total / slots


def write_policy_csv(path, spec: MdpSpec, V: np.ndarray, d: float, policy: PolicyTable):
    """One row per (topology state, lattice state): state, V, d, resource action, transfers."""
    g = spec.graph
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"u_{n}_{c}" for n, c in spec.pairs] + ["V", "d", "I"]
                   + [f"x_{g.tail[l]}_{g.head[l]}_{c}" for l in range(g.L) for c in range(g.C)])
        for s in range(spec.rates.num_states):
            for i, u in enumerate(spec.states):
                I, x = spec.actions[s][policy.table[s, i]]
                w.writerow([s, *u.tolist(), repr(float(V[i])), repr(d), I, *x.ravel().tolist()])


def single_queue_spec(p: float = 0.3, queue_cap: int = 10) -> MdpSpec:
    from .graph import wireline_rate_model
    g = NetworkGraph(2, ((0, 1),), (1,))
    return MdpSpec(g, wireline_rate_model(g, 1.0), {(0, 0): [1 - p, p]}, queue_cap)


def diamond_spec(p_source: float = 0.6, p_branch: float = 0.5, queue_cap: int = 8) -> MdpSpec:
    """Source 0 splits over relays 1 and 2 toward 3; relay 1 also gets its own arrivals."""
    from .graph import wireline_rate_model
    g = NetworkGraph(4, ((0, 1), (0, 2), (1, 3), (2, 3)), (3,))
    arrivals = {(0, 0): [1 - p_source, p_source], (1, 0): [1 - p_branch, p_branch]}
    return MdpSpec(g, wireline_rate_model(g, 1.0), arrivals, queue_cap)


def tandem_spec(p: float = 0.4, queue_cap: int = 8) -> MdpSpec:
    from .graph import wireline_rate_model
    g = NetworkGraph(3, ((0, 1), (1, 2)), (2,))
    return MdpSpec(g, wireline_rate_model(g, 1.0), {(0, 0): [1 - p, p]}, queue_cap)
