import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpnet.bias import (BiasSpec, bias_min_downstream, bias_next_hop, bias_shortest_path, downstream_sums,
                        eta_next_hop, general_bias, hop_counts, min_z)
from bpnet.graph import NetworkGraph, line_graph, max_in_degree
from conftest import clustered_graph

DIAMOND = NetworkGraph(4, ((0, 1), (0, 2), (1, 3), (2, 3)), (3,))


def star(backlogs):
    k = len(backlogs)
    g = NetworkGraph(k + 2, tuple((0, i + 1) for i in range(k)) + tuple((i + 1, k + 1) for i in range(k)),
                     (k + 1,))
    U = np.zeros((k + 2, 1))
    U[1:k + 1, 0] = backlogs
    return g, U


def test_next_hop_examples():
    g, U = star([3, 5])
    assert bias_next_hop(g, U, 1)[0, 0] == 3
    g, U = star([2, 2, 7])
    assert bias_next_hop(g, U, 2)[0, 0] == 1
    g, U = star([0, 0])
    assert bias_next_hop(g, U, 1)[0, 0] == 0


def test_next_hop_tie_weights_average_to_minimum():
    g, U = star([2, 2, 7])
    eta = eta_next_hop(g, U)
    assert eta[0, 0, 1:4].tolist() == [0.5, 0.5, 0]
    assert np.allclose(general_bias(U, eta, 2), bias_next_hop(g, U, 2))


def test_next_hop_sinks_and_destination_are_zero():
    g = NetworkGraph(3, ((0, 1), (1, 2), (2, 1)), (1,))
    U = np.array([[1.0], [0.0], [4.0]])
    f = bias_next_hop(g, U, 1)
    assert f[1, 0] == 0
    g2 = NetworkGraph(3, ((0, 1),), (2,))
    assert bias_next_hop(g2, np.ones((3, 1)), 1)[1, 0] == 0  # no outgoing link


def test_min_downstream_diamond():
    U = np.array([[0.0], [4.0], [1.0], [0.0]])
    assert bias_min_downstream(DIAMOND, U, 1)[0, 0] == 1
    assert bias_min_downstream(DIAMOND, U, 4)[0, 0] == 0.25
    assert not bias_min_downstream(DIAMOND, np.zeros((4, 1)), 1).any()


def test_min_downstream_unreachable_is_inf():
    g = NetworkGraph(3, ((0, 1),), (1,))
    f = bias_min_downstream(g, np.zeros((3, 1)), 1)
    assert np.isinf(f[2, 0]) and f[0, 0] == 0


def _brute_paths(g, U, c):
    succ = {n: [] for n in range(g.N)}
    for l, (a, b) in enumerate(g.links):
        if g.allowed[c, l]:
            succ[a].append(b)
    d = g.dest[c]
    best = np.full(g.N, np.inf)

    def walk(node, seen, cost, start):
        if node == d:
            best[start] = min(best[start], cost)
            return
        for k in succ[node]:
            if k not in seen:
                walk(k, seen | {k}, cost + (0 if k == d else U[k, c]), start)

    for n in range(g.N):
        walk(n, {n}, 0.0, n)
    return best


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 8), st.data())
def test_bellman_ford_matches_path_enumeration_on_dags(n, data):
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    mask = data.draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    links = tuple(p for p, m in zip(pairs, mask) if m) or ((0, n - 1),)
    g = NetworkGraph(n, links, (n - 1,))
    U = np.array(data.draw(st.lists(st.integers(0, 9), min_size=n, max_size=n)), dtype=float).reshape(n, 1)
    U[n - 1] = 0
    assert np.array_equal(downstream_sums(g, U)[:, 0], _brute_paths(g, U, 0))


def test_bellman_ford_on_cyclic_graph_and_fixpoint(rng):
    g = clustered_graph()
    U = rng.integers(0, 20, (g.N, g.C)).astype(float)
    U[g.dest_mask()] = 0
    T = downstream_sums(g, U)
    for c in range(g.C):
        for n in range(g.N):
            if n == g.dest[c]:
                assert T[n, c] == 0
                continue
            nxt = [b for l, (a, b) in enumerate(g.links) if a == n]
            assert T[n, c] == min(U[b, c] + T[b, c] for b in nxt)


def test_shortest_path_bias():
    g = line_graph(3).with_commodities([2])
    assert not bias_shortest_path(g, 0).any()
    assert bias_shortest_path(g, 1)[:, 0].tolist() == [2, 1, 0]


def test_hop_counts_match_bfs_on_clustered_grid():
    import networkx as nx
    g = clustered_graph()
    G = nx.DiGraph(list(g.links))
    sp = bias_shortest_path(g, 2)
    for c, d in enumerate(g.dest):
        dist = nx.single_source_shortest_path_length(G.reverse(copy=False), d)
        for n in range(g.N):
            assert sp[n, c] == 2 * dist[n]


def test_min_z_examples():
    assert min_z(1, 5, 0.5) == 20
    assert min_z(1, 1, 2) == 1
    assert min_z(2, 3, 0.1) == pytest.approx(120)
    with pytest.raises(ValueError):
        min_z(1, 5, 0)


def test_bias_spec_composite_sums_members(rng):
    g = clustered_graph()
    U = rng.uniform(0, 10, (g.N, g.C))
    U[g.dest_mask()] = 0
    spec = BiasSpec("composite", members=(BiasSpec("next_hop", z=2), BiasSpec("shortest_path", B=1)))
    assert np.allclose(spec(g, U), bias_next_hop(g, U, 2) + bias_shortest_path(g, 1))
    assert spec.is_dynamic
    assert not BiasSpec("shortest_path", B=1).is_dynamic


def test_bias_spec_validation():
    with pytest.raises(ValueError):
        BiasSpec("next_hop", z=0)
    with pytest.raises(ValueError):
        BiasSpec("shortest_path", B=-1)
    with pytest.raises(ValueError):
        BiasSpec("custom")
    with pytest.raises(ValueError):
        BiasSpec("magic")


def test_custom_bias_callable():
    spec = BiasSpec("custom", fn=lambda g, U: 2 * U)
    U = np.ones((4, 1))
    assert np.array_equal(spec(DIAMOND, U), 2 * U)


def _inst(seed):
    rng = np.random.default_rng(seed)
    g = clustered_graph(seed % 5)
    U = rng.exponential(5, (g.N, g.C)) * rng.integers(0, 2, (g.N, g.C))
    U[g.dest_mask()] = 0
    return g, U, rng


@pytest.mark.parametrize("seed", range(20))
def test_bias_properties(seed):
    g, U, rng = _inst(seed)
    for fn in (bias_next_hop, bias_min_downstream):
        f1 = fn(g, U, 1.0)
        assert (f1 >= 0).all()
        assert np.allclose(fn(g, U, 3.0), f1 / 3.0)
        # monotone in any single backlog
        n, c = rng.integers(g.N), rng.integers(g.C)
        U2 = U.copy()
        if n != g.dest[c]:
            U2[n, c] += 4
        assert (fn(g, U2, 1.0) >= f1 - 1e-12).all()


@pytest.mark.parametrize("seed", range(20))
def test_bias_difference_bound(seed):
    # sum over links of mu (f_a - f_b) <= sum U R_max d_in / z for any feasible mu
    g, U, rng = _inst(seed)
    z, R = 2.0, 1.0
    bound = U.sum() * R * max_in_degree(g) / z
    for fn in (bias_next_hop, bias_min_downstream):
        f = fn(g, U, z)
        mu = np.zeros((g.L, g.C))
        mu[np.arange(g.L), rng.integers(0, g.C, g.L)] = rng.uniform(0, R, g.L)
        lhs = float(np.sum(mu * (f[g.tail] - f[g.head])))
        assert lhs <= bound + 1e-9
