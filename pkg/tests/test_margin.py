import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from bpnet.graph import NetworkGraph, grid_node
from bpnet.margin import (DisconnectedDemandError, InfeasibleThetaError, all_pairs, eps_z, max_margin,
                          routable, split_margin, theta_optimal_rates)
from conftest import PAIRS, clustered_graph

LINK = NetworkGraph(2, ((0, 1),), (1,))
SHARED = NetworkGraph(2, ((0, 1),), (1, 1))


def test_single_link_residual():
    r = max_margin(LINK, 1.0, [[0.3], [0.0]])
    assert r.eps == pytest.approx(0.7, abs=1e-9)
    assert r.flows[0, 0] == pytest.approx(1.0)


def test_two_commodities_share_a_link():
    r = max_margin(SHARED, 1.0, [[0.3, 0.3], [0, 0]])
    assert r.eps == pytest.approx(0.2, abs=1e-9)


def test_negative_margin_when_overloaded():
    r = max_margin(LINK, 1.0, [[1.5], [0.0]])
    assert r.eps == pytest.approx(-0.5) and not r.feasible
    assert not routable(LINK, 1.0, [[1.5], [0.0]])
    assert routable(LINK, 1.0, [[1.0], [0.0]])


def test_certificate_is_a_feasible_flow():
    g = clustered_graph()
    lam = np.zeros((g.N, g.C))
    for c, (s, _) in enumerate(PAIRS):
        lam[grid_node(*s), c] = 0.4
    r = max_margin(g, 1.0, lam)
    assert r.duality_gap < 1e-7
    f = r.flows
    assert (f >= -1e-9).all() and (f.sum(axis=1) <= 1 + 1e-7).all()
    net = g.out_incidence @ f - g.in_incidence @ f
    live = ~g.dest_mask()
    target = lam + r.eps * r.active
    assert np.allclose(net[live], target[live], atol=1e-7)
    doc = r.to_dict(g)
    assert doc["eps"] == r.eps and all(len(x) == 4 for x in doc["flows"])


def _cut_bound(g):
    # cluster 0 hosts 6 sources and no destinations; count unit links leaving it
    inside = set(range(16))
    leaving = sum(1 for a, b in g.links if a in inside and b not in inside)
    srcs = sum(1 for s, d in PAIRS if grid_node(*s) in inside and grid_node(*d) not in inside)
    return leaving / srcs


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_clustered_grid_boundary_equals_cluster_cut(seed):
    g = clustered_graph(seed)
    active = np.zeros((g.N, g.C), dtype=bool)
    for c, (s, _) in enumerate(PAIRS):
        active[grid_node(*s), c] = True
    lam_star = max_margin(g, 1.0, np.zeros((g.N, g.C)), active).eps
    assert lam_star == pytest.approx(_cut_bound(g), abs=1e-7)


def test_disconnected_demand_reported_per_commodity():
    g = NetworkGraph(3, ((0, 1),), (1, 2))
    with pytest.raises(DisconnectedDemandError) as err:
        max_margin(g, 1.0, [[0.1, 0.1], [0, 0], [0, 0]])
    assert err.value.commodities == [1]


def test_no_active_pair():
    with pytest.raises(ValueError):
        max_margin(LINK, 1.0, [[0.0], [0.0]])


def test_eps_z_and_split():
    g = clustered_graph()
    ez = eps_z(g, 1.0, 4.0)
    assert ez.shape == (64, 8) and np.allclose(ez, 2 * 224 / 4)
    assert not eps_z(g, 1.0, np.inf).any()
    assert split_margin(1.0, 0.4) == pytest.approx((0.7, 0.3))
    with pytest.raises(ValueError):
        split_margin(0.3, 0.4)


def test_all_pairs_excludes_destinations_and_unreachable():
    g = NetworkGraph(3, ((0, 1),), (1,))
    assert all_pairs(g)[:, 0].tolist() == [True, False, False]


def test_theta_optimal_single_link():
    r = theta_optimal_rates(LINK, 1.0, [[3.0], [0.0]])
    assert r[0, 0] == pytest.approx(1.0, abs=1e-5)


def test_theta_optimal_symmetric_share():
    r = theta_optimal_rates(SHARED, 1.0, [[3.0, 3.0], [0, 0]])
    assert r[0] == pytest.approx([0.5, 0.5], abs=1e-5)


def test_theta_optimal_linear_and_demand_cap():
    r = theta_optimal_rates(SHARED, 1.0, [[0.2, 3.0], [0, 0]], utility="linear")
    assert r[0].sum() == pytest.approx(1.0, abs=1e-6)
    r = theta_optimal_rates(SHARED, 1.0, [[0.2, 3.0], [0, 0]])
    assert r[0] == pytest.approx([0.2, 0.8], abs=1e-5)


def test_theta_infeasible():
    with pytest.raises(InfeasibleThetaError):
        theta_optimal_rates(LINK, 1.0, [[1.0], [0.0]], theta=2.0)


SRC = (0, 1)


def _demand(g, r1, r2):
    d = np.zeros((g.N, g.C))
    d[SRC[0], 0] = r1
    d[SRC[1], 1] = r2
    return d


def _best_r2(g, cap, theta, r1):
    """LP oracle: largest commodity-1 rate routable next to r1 (both on top of theta)."""
    active = _demand(g, 0.0, 1.0) > 0
    try:
        return max_margin(g, cap, _demand(g, r1, 0.0) + theta, active).eps
    except RuntimeError:
        return -np.inf


def test_theta_optimal_matches_grid_search():
    rng = np.random.default_rng(6)
    links = [(0, 2), (0, 3), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5), (2, 3), (3, 4)]
    g = NetworkGraph(6, tuple(links), (5, 5))
    cap = rng.uniform(0.3, 1.2, g.L)
    lam = _demand(g, 2.0, 2.0)
    theta = np.zeros((g.N, g.C))
    theta[0, 0] = theta[1, 1] = 0.05
    got = theta_optimal_rates(g, cap, lam, theta=theta)

    def best_r2(r1):
        return min(_best_r2(g, cap, theta, r1), 2.0)

    def neg(r1):
        r2 = best_r2(r1)
        return np.inf if r2 <= 0 or r1 <= 0 else -(np.log(r1) + np.log(r2))

    grid = np.linspace(1e-3, 2.0, 401)
    vals = [neg(x) for x in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    r1 = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7}).x
    oracle = np.array([r1, best_r2(r1)])
    assert got[SRC[0], 0] == pytest.approx(oracle[0], abs=1e-3)
    assert got[SRC[1], 1] == pytest.approx(oracle[1], abs=1e-3)
