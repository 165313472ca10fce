import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpnet.graph import NetworkGraph
from bpnet.queues import (QueueState, delivered, resolve_transfers, step_network_queues,
                          step_transport_queues, step_virtual_queues)

FAN = NetworkGraph(3, ((0, 1), (0, 2)), (2,))


def _mu(values):
    return np.array(values, dtype=float).reshape(-1, 1)


def test_sufficient_backlog_passes_offer():
    g = NetworkGraph(2, ((0, 1),), (1,))
    assert resolve_transfers(g, np.array([[5.0], [0]]), _mu([3]))[0, 0] == 3


def test_backlog_limited():
    g = NetworkGraph(2, ((0, 1),), (1,))
    assert resolve_transfers(g, np.array([[2.0], [0]]), _mu([3]))[0, 0] == 2


def test_decreasing_offer_priority():
    nu = resolve_transfers(FAN, np.array([[2.0], [0], [0]]), _mu([3, 1]))
    assert nu[:, 0].tolist() == [2, 0]
    # order by offer, not by link id
    nu = resolve_transfers(FAN, np.array([[2.0], [0], [0]]), _mu([1, 3]))
    assert nu[:, 0].tolist() == [0, 2]
    # equal offers: lower link id first
    nu = resolve_transfers(FAN, np.array([[1.5], [0], [0]]), _mu([1, 1]))
    assert nu[:, 0].tolist() == [1, 0.5]


def test_resolve_matches_exhaustive_small_cases():
    for u, a, b in itertools.product(range(5), range(4), range(4)):
        nu = resolve_transfers(FAN, np.array([[float(u)], [0], [0]]), _mu([a, b]))
        assert nu.sum() == min(a + b, u)
        assert (nu[:, 0] <= [a, b]).all()


def test_resolve_rejects_negative():
    with pytest.raises(ValueError):
        resolve_transfers(FAN, np.array([[-1.0], [0], [0]]), _mu([1, 0]))
    with pytest.raises(ValueError):
        resolve_transfers(FAN, np.zeros((3, 1)), _mu([-1, 0]))


def test_network_step_examples():
    g = NetworkGraph(3, ((0, 1), (1, 2)), (2,))
    z = np.zeros((3, 1))
    assert not step_network_queues(g, z, np.zeros((2, 1)), z).any()
    U = np.array([[2.0], [3.0], [0.0]])
    out = step_network_queues(g, U, _mu([1, 0]), z)
    assert out[:, 0].tolist() == [1, 4, 0]


def test_transport_step_examples():
    inf = np.array([[np.inf]])
    assert step_transport_queues(np.array([[0.3]]), np.array([[0.3]]), np.zeros((1, 1)), inf)[0, 0] == 0
    assert step_transport_queues(np.array([[1.0]]), np.zeros((1, 1)), np.array([[5.0]]), np.array([[2.0]]))[0, 0] == 2
    assert step_transport_queues(np.array([[0.0]]), np.zeros((1, 1)), np.array([[5.0]]), np.zeros((1, 1)))[0, 0] == 0
    with pytest.raises(ValueError):
        step_transport_queues(np.array([[0.2]]), np.array([[0.3]]), np.zeros((1, 1)), inf)


def test_virtual_step_examples():
    f = lambda y, r, g: step_virtual_queues(np.array([[y]]), np.array([[r]]), np.array([[g]]))[0, 0]
    assert f(0, 0, 0.5) == 0.5
    assert f(1, 2, 0) == 0
    assert f(1, 0.4, 0.7) == pytest.approx(1.3)


def test_zero_state_has_empty_destinations():
    st_ = QueueState.zeros(FAN, Q_max=5.0)
    assert st_.Q_max[2, 0] == 0 and st_.Q_max[0, 0] == 5
    cp = st_.copy()
    cp.U[0, 0] = 1
    assert st_.U[0, 0] == 0


def test_delivery_reduces_backlog():
    g = NetworkGraph(2, ((0, 1),), (1,))
    U = np.array([[2.0], [0.0]])
    nu = resolve_transfers(g, U, _mu([1]))
    assert step_network_queues(g, U, nu, np.zeros((2, 1))).sum() == 1
    assert delivered(g, nu).tolist() == [1]


@st.composite
def random_instance(draw):
    n = draw(st.integers(2, 6))
    C = draw(st.integers(1, 3))
    links = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), min_size=1, max_size=12))
    links = sorted({l for l in links if l[0] != l[1]})
    if not links:
        links = [(0, 1)]
    dest = tuple(draw(st.integers(0, n - 1)) for _ in range(C))
    seed = draw(st.integers(0, 2 ** 31))
    return NetworkGraph(n, tuple(links), dest), seed


@settings(max_examples=1000, deadline=None)
@given(random_instance())
def test_random_step_nonnegative_and_conserving(inst):
    g, seed = inst
    rng = np.random.default_rng(seed)
    U = rng.uniform(0, 3, (g.N, g.C)) * rng.integers(0, 2, (g.N, g.C))
    U[g.dest_mask()] = 0
    A = rng.uniform(0, 2, (g.N, g.C))
    A[g.dest_mask()] = 0
    mu = np.zeros((g.L, g.C))
    cs = rng.integers(0, g.C, g.L)
    mu[np.arange(g.L), cs] = rng.uniform(0, 2, g.L)
    nu = resolve_transfers(g, U, mu)
    assert (nu <= mu).all() and (nu >= 0).all()
    out_bits = g.out_incidence @ nu
    assert (out_bits <= U + 1e-12).all()
    U2 = step_network_queues(g, U, nu, A)
    assert (U2 >= 0).all() and not U2[g.dest_mask()].any()
    assert abs(U2.sum() - (U.sum() + A.sum() - delivered(g, nu).sum())) < 1e-9
