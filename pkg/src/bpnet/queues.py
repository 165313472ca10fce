"""Network, transport and virtual queue state and their per-slot dynamics.

Transfers are ``L x C`` arrays indexed like ``graph.links``; queue matrices
are ``N x C``.  Quantities are fluid (real-valued) bits.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .graph import NetworkGraph

NEG_TOL = 1e-9


class QueueInvariantError(RuntimeError):
    pass


@dataclass
class QueueState:
    U: np.ndarray
    Q: np.ndarray
    Q_max: np.ndarray
    Y: np.ndarray
    delta: float = 1.0

    @classmethod
    def zeros(cls, graph: NetworkGraph, Q_max=np.inf, delta: float = 1.0) -> "QueueState":
        shape = (graph.N, graph.C)
        qmax = np.broadcast_to(np.asarray(Q_max, dtype=float), shape).copy()
        qmax[graph.dest_mask()] = 0.0
        return cls(np.zeros(shape), np.zeros(shape), qmax, np.zeros(shape), float(delta))

    def copy(self) -> "QueueState":
        return replace(self, U=self.U.copy(), Q=self.Q.copy(), Q_max=self.Q_max.copy(), Y=self.Y.copy())


def resolve_transfers(graph: NetworkGraph, U: np.ndarray, mu: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """Actual transfers nu from offered rates mu, never removing more than U.

    Where a queue cannot cover all its offered outgoing rates, its backlog is
    handed out in decreasing order of offered rate (ties by link index), each
    link capped at its offer.
    """
    if (U < 0).any() or (mu < 0).any():
        raise ValueError("negative backlog or offered rate")
    return _kernels.resolve(graph._out_ptr, graph._out_order, np.asarray(U, dtype=float),
                            np.asarray(mu, dtype=float), float(delta), NEG_TOL)


def step_network_queues(graph: NetworkGraph, U: np.ndarray, nu: np.ndarray, inflow: np.ndarray,
                        delta: float = 1.0) -> np.ndarray:
    """U' = U - out*delta + inflow*delta + in*delta, destinations absorbed.

    ``inflow`` is the exogenous arrivals A (no flow control) or admissions r.
    """
    U_next = _kernels.apply_transfers(graph.tail, graph.head, np.asarray(U, dtype=float),
                                      np.asarray(nu, dtype=float), np.asarray(inflow, dtype=float),
                                      graph._dest_arr, float(delta))
    if (U_next < -NEG_TOL).any():
        n, c = np.unravel_index(np.argmin(U_next), U_next.shape)
        raise QueueInvariantError(f"negative backlog {U_next[n, c]:.3g} at node {n}, commodity {c}")
    np.maximum(U_next, 0.0, out=U_next)
    return U_next


def step_transport_queues(Q: np.ndarray, r: np.ndarray, A: np.ndarray, Q_max: np.ndarray,
                          delta: float = 1.0) -> np.ndarray:
    """Q' = min(Q - r*delta + A*delta, Q_max)."""
    if (r * delta > Q + NEG_TOL).any():
        raise ValueError("admitting more than the transport queue holds")
    return np.minimum(np.maximum(Q - r * delta, 0.0) + A * delta, Q_max)


def step_virtual_queues(Y: np.ndarray, r: np.ndarray, gamma: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """Y' = (Y - r*delta)^+ + gamma*delta."""
    return np.maximum(Y - r * delta, 0.0) + gamma * delta


def delivered(graph: NetworkGraph, nu: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """Bits of each commodity that reached their destination this slot."""
    return _kernels.delivered(graph.head, graph._dest_arr, np.asarray(nu, dtype=float), float(delta))
