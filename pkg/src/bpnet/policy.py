"""Enhanced backpressure control (resource allocation, routing) and flow control."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bias import BiasSpec
from .graph import NetworkGraph, RateModel
from .margin import eps_z

ALGORITHMS = ("bp", "bpbias", "bpnxt", "bpmin", "bpnxtbias", "bpminbias", "custom")
UTILITIES = ("log", "linear", "none")


class InfeasibleMarginError(ValueError):
    pass


@dataclass(frozen=True)
class FlowControlSpec:
    """Flow-control parameters.

    ``r_max`` is a scalar or ``N x C`` array; ``utility_mask`` marks the
    (node, commodity) pairs whose utility counts (the rest have h = 0).
    """

    M: float
    r_max: object = 1.0
    utility: str = "log"
    weight: float = 1.0
    utility_mask: np.ndarray | None = None
    Q_max: float = np.inf

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if np.any(np.asarray(self.r_max) < 0):
            raise ValueError("r_max must be non-negative")
        if self.utility not in UTILITIES:
            raise ValueError(f"unknown utility {self.utility!r}")

    def r_max_matrix(self, shape) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.r_max, dtype=float), shape)

    def mask(self, shape) -> np.ndarray:
        if self.utility_mask is None:
            return np.ones(shape, dtype=bool)
        return np.asarray(self.utility_mask, dtype=bool)


@dataclass(frozen=True)
class PolicySpec:
    algorithm: str = "bp"
    bias: BiasSpec = field(default_factory=BiasSpec)
    flow_control: FlowControlSpec | None = None
    z: float = np.inf
    B: float = 0.0

    @property
    def label(self) -> str:
        parts = [self.algorithm]
        if self.algorithm in ("bpnxt", "bpmin", "bpnxtbias", "bpminbias"):
            parts.append(f"z={self.z:g}")
        if self.algorithm in ("bpbias", "bpnxtbias", "bpminbias"):
            parts.append(f"B={self.B:g}")
        return " ".join(parts)


def make_policy(algorithm: str, z: float = np.inf, B: float = 0.0,
                flow_control: FlowControlSpec | None = None, bias: BiasSpec | None = None) -> PolicySpec:
    """Named algorithm -> PolicySpec.  BP and BPbias are the zero / shortest-path instances."""
    algorithm = algorithm.lower()
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    sp = BiasSpec("shortest_path", B=B)
    if algorithm == "bp":
        b = BiasSpec()
    elif algorithm == "bpbias":
        b = sp
    elif algorithm == "bpnxt":
        b = BiasSpec("next_hop", z=z)
    elif algorithm == "bpmin":
        b = BiasSpec("min_downstream", z=z)
    elif algorithm == "bpnxtbias":
        b = BiasSpec("composite", members=(BiasSpec("next_hop", z=z), sp))
    elif algorithm == "bpminbias":
        b = BiasSpec("composite", members=(BiasSpec("min_downstream", z=z), sp))
    else:
        if bias is None:
            raise ValueError("custom algorithm needs a bias")
        b = bias
    return PolicySpec(algorithm, b, flow_control, float(z), float(B))


@dataclass
class BackpressureTable:
    W: np.ndarray       # L x C, -inf where the commodity may not use the link
    c_star: np.ndarray  # L, -1 where no commodity may use the link
    W_star: np.ndarray  # L, clipped best weight


def compute_backpressure(graph: NetworkGraph, U: np.ndarray, f: np.ndarray | None = None,
                         static_bias: np.ndarray | None = None) -> BackpressureTable:
    """W_ab^(c) = (U_a + f_a + sp_a) - (U_b + f_b + sp_b) on allowed links."""
    X = U if f is None else U + f
    if static_bias is not None:
        X = X + static_bias
    # ties go to the smallest commodity id
    W, c_star, W_star = _kernels.backpressure(graph.tail, graph.head, graph._allowed_c,
                                              np.asarray(X, dtype=float))
    return BackpressureTable(W, c_star, W_star)


def allocate_resources(rates: RateModel, s: int, table: BackpressureTable) -> int:
    """Resource action maximising sum_l W*_l R_l(s, I); first one on ties."""
    if rates.num_actions == 1:
        return 0
    return int(np.argmax(rates.rates[s] @ table.W_star))


def route(table: BackpressureTable, link_rates: np.ndarray, C: int) -> np.ndarray:
    """Offer each link's full rate to its best commodity when W* > 0."""
    return _kernels.route(table.c_star, table.W_star, np.asarray(link_rates, dtype=float), C)


def optimal_gamma(fc: FlowControlSpec, Y: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """argmax over [0, r_max] of M h(gamma) - Y gamma delta, in closed form."""
    r_max = fc.r_max_matrix(Y.shape)
    mask = fc.mask(Y.shape)
    if fc.utility == "log":
        with np.errstate(divide="ignore", over="ignore"):
            stationary = np.where(Y > 0, fc.M / (Y * delta), np.inf)
        gamma = np.minimum(stationary, r_max)
    elif fc.utility == "linear":
        gamma = np.where(fc.M * fc.weight >= Y * delta, r_max, 0.0)
    else:
        gamma = np.zeros(Y.shape)
    # h = 0: maximiser of -Y gamma is 0
    return np.where(mask, gamma, 0.0)


def flow_control_admit(Q: np.ndarray, U: np.ndarray, Y: np.ndarray, fc: FlowControlSpec,
                       delta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Admissions r and auxiliary rates gamma for one slot."""
    r_max = fc.r_max_matrix(Q.shape)
    r = np.where(Y > U, np.minimum(Q / delta, r_max), 0.0)
    return r, optimal_gamma(fc, Y, delta)


def utility(fc: FlowControlSpec, rates: np.ndarray) -> float:
    """Sum of utilities over the masked pairs (``-inf`` if a log pair is at 0)."""
    mask = fc.mask(rates.shape)
    x = rates[mask]
    if fc.utility == "log":
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(x)))
    if fc.utility == "linear":
        return float(fc.weight * np.sum(x))
    return 0.0


def _beta(graph, R_max, eps, delta, z):
    shape = (graph.N, graph.C)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), shape)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), shape)
    ez = eps_z(graph, R_max, z)
    live = ~graph.dest_mask()
    if (eps[live] < ez[live] - 1e-12).any():
        raise InfeasibleMarginError("margin eps is below eps_z; increase z")
    if (delta[live] <= 0).any():
        raise InfeasibleMarginError("delta must be strictly positive")
    beta = float(np.min((eps + delta - ez)[live]))
    if beta <= 0:
        raise InfeasibleMarginError(f"non-positive drift margin {beta:g}")
    return beta


def theorem1_bound(graph: NetworkGraph, rates: RateModel, arrival_caps: np.ndarray, eps, delta,
                   z) -> float:
    """Upper bound N*B/beta on the long-run average total network backlog.

    ``arrival_caps`` is ``N x C`` (A^(c)_{n,max}); ``eps``, ``delta`` and ``z``
    are scalars or ``N x C`` arrays.  The caller guarantees
    lambda + eps + delta lies in the stability region.
    """
    beta = _beta(graph, rates.R_max, eps, delta, z)
    a_max = np.asarray(arrival_caps, dtype=float).sum(axis=1)
    mu_out = rates.out_rate_max(graph)
    mu_in = rates.in_rate_max(graph)
    NB = 0.5 * float(np.sum(mu_out ** 2 + (a_max + mu_in) ** 2))
    return NB / beta


def theorem2_bounds(graph: NetworkGraph, rates: RateModel, fc: FlowControlSpec, eps, delta,
                    z) -> tuple[float, float]:
    """(backlog bound (N B + M H_max)/beta, utility shortfall N B / M) under flow control."""
    beta = _beta(graph, rates.R_max, eps, delta, z)
    shape = (graph.N, graph.C)
    r_max_pairs = np.where(graph.dest_mask(), 0.0, fc.r_max_matrix(shape))
    r_max = r_max_pairs.sum(axis=1)
    mu_out = rates.out_rate_max(graph)
    mu_in = rates.in_rate_max(graph)
    NB = 0.5 * float(np.sum(mu_out ** 2 + (r_max + mu_in) ** 2 + 2 * r_max ** 2))
    H_max = utility(fc, r_max_pairs)
    return (NB + fc.M * H_max) / beta, NB / fc.M


class Controller:
    """Per-run decision maker: bias -> weights -> resource action -> offered rates."""

    def __init__(self, graph: NetworkGraph, rates: RateModel, spec: PolicySpec):
        self.graph = graph
        self.rates = rates
        self.spec = spec
        self.static = spec.bias.static(graph)
        if not np.any(self.static):
            self.static = None
        self.dynamic = spec.bias.is_dynamic or spec.bias.kind == "custom"

    def bias(self, U: np.ndarray) -> np.ndarray | None:
        if not self.dynamic:
            return None
        f = self.spec.bias.dynamic(self.graph, U)
        if np.isnan(f).any() or (f < 0).any():
            raise ValueError("bias must be nonnegative (inf allowed), got NaN or a negative entry")
        return f

    def offered_rates(self, U: np.ndarray, s: int = 0) -> tuple[int, np.ndarray]:
        table = compute_backpressure(self.graph, U, self.bias(U), self.static)
        action = allocate_resources(self.rates, s, table)
        return action, route(table, self.rates.rates[s, action], self.graph.C)
