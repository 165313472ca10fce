import numpy as np
import pytest

from bpnet.dp import (ConvergenceError, MdpSpec, MultichainError, PolicyTable, asymptotic_policy,
                      bellman_residual, bp_policy, diamond_spec, drop_rate, evaluate_policy,
                      optimal_policy, relative_value_iteration, simulate_policy, single_queue_spec,
                      tandem_spec, transition_matrix, value_derivatives, write_policy_csv)
from bpnet.graph import NetworkGraph, RateModel, wireline_rate_model


@pytest.fixture(scope="module")
def single():
    s = single_queue_spec(0.3, 10)
    d, V = relative_value_iteration(s)
    return s, d, V


@pytest.fixture(scope="module")
def diamond():
    s = diamond_spec()
    d, V = relative_value_iteration(s)
    return s, d, V


def _two_state_oracle(p):
    # serve-always: next backlog equals this slot's arrival, so u is Bernoulli(p)
    P = np.array([[1 - p, p], [1 - p, p]])
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(abs(w - 1))])
    pi /= pi.sum()
    return pi @ [0, 1]


def test_single_queue_average_cost(single):
    s, d, V = single
    assert d == pytest.approx(_two_state_oracle(0.3), abs=1e-6)
    assert V[0] == 0


def test_single_queue_serves_when_possible(single):
    s, d, V = single
    pol = optimal_policy(s, V)
    for u in range(s.queue_cap + 1):
        I, x = pol.action(0, [u])
        assert x[0, 0] == min(u, 1)
    assert evaluate_policy(s, pol) == pytest.approx(d, abs=1e-6)


def test_zero_arrivals():
    g = NetworkGraph(2, ((0, 1),), (1,))
    s = MdpSpec(g, wireline_rate_model(g, 1.0), {}, 4)
    d, V = relative_value_iteration(s)
    # drains one unit per slot, so V(u) = u + V(u - 1)
    u = s.states[:, 0]
    assert d == 0 and np.allclose(V, u * (u + 1) / 2)
    pol = optimal_policy(s, V)
    assert evaluate_policy(s, bp_policy(s)) == 0
    assert pol.action(0, [0])[1].sum() == 0


def test_bellman_residual_small(diamond):
    s, d, V = diamond
    assert bellman_residual(s, d, V) < 1e-8


def test_transition_rows_are_stochastic(diamond):
    s, d, V = diamond
    for pol in (optimal_policy(s, V), bp_policy(s)):
        P = transition_matrix(s, pol)
        assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)


def test_actions_respect_backlog(diamond):
    s, d, V = diamond
    for pol in (optimal_policy(s, V), bp_policy(s), asymptotic_policy(s, V)):
        for i, u in enumerate(s.states):
            I, x = s.actions[0][pol.table[0, i]]
            U = s.to_matrix(u)
            out = s.graph.out_incidence @ x
            assert (out <= U + 1e-12).all()


def test_optimal_is_lower_bound_and_consistent(diamond):
    s, d, V = diamond
    opt = evaluate_policy(s, optimal_policy(s, V))
    bp = evaluate_policy(s, bp_policy(s))
    asym = evaluate_policy(s, asymptotic_policy(s, V))
    assert opt == pytest.approx(d, abs=1e-6)
    assert d <= bp + 1e-9 and d <= asym + 1e-9
    assert bp - d > 1e-3
    assert asym <= bp + 1e-9
    assert drop_rate(s, bp_policy(s)) < 1e-3


def test_optimal_avoids_branch_where_bp_does_not(diamond):
    s, d, V = diamond
    opt, bp = optimal_policy(s, V), bp_policy(s)
    differ = [i for i in range(s.num_states) if opt.table[0, i] != bp.table[0, i]]
    assert differ
    # some state where BP pushes into the loaded relay 1 while the optimum does not
    pushed = [i for i in differ if s.actions[0][bp.table[0, i]][1][0, 0] > s.actions[0][opt.table[0, i]][1][0, 0]]
    assert pushed


def test_quadratic_value_gives_bp_policy():
    s = tandem_spec(0.4, 6)
    V = (s.states ** 2).sum(axis=1).astype(float)
    D = value_derivatives(s, V)
    interior = (s.states > 0).all(axis=1) & (s.states < s.queue_cap).all(axis=1)
    assert np.allclose(D[interior], 2 * s.states[interior])
    assert asymptotic_policy(s, V) == bp_policy(s)


def test_asymptotic_zero_state_sends_nothing(diamond):
    s, d, V = diamond
    I, x = asymptotic_policy(s, V).action(0, [0, 0, 0])
    assert x.sum() == 0


def test_tandem_matches_simulation():
    s = tandem_spec(0.4, 8)
    d, V = relative_value_iteration(s)
    pol = optimal_policy(s, V)
    sim = simulate_policy(s, pol, 1_000_000, seed=3)
    assert sim == pytest.approx(d, rel=0.02)


def test_topology_states_are_averaged():
    g = NetworkGraph(2, ((0, 1),), (1,))
    rm = RateModel(np.array([[[1.0]], [[0.0]]]), np.array([0.5, 0.5]))
    s = MdpSpec(g, rm, {(0, 0): [0.8, 0.2]}, 12)
    d, V = relative_value_iteration(s)
    # birth-death chain oracle: up w.p. 0.2*(1 - serve), down w.p. 0.5*0.8 when u > 0
    P = np.zeros((13, 13))
    for u in range(13):
        for serve, ps in ((1, 0.5), (0, 0.5)):
            x = min(u, serve)
            for a, pa in ((0, 0.8), (1, 0.2)):
                P[u, min(u - x + a, 12)] += ps * pa
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(abs(w - 1))])
    pi /= pi.sum()
    assert d == pytest.approx(pi @ np.arange(13), abs=1e-6)


def test_multichain_detected():
    g = NetworkGraph(2, ((0, 1),), (1,))
    s = MdpSpec(g, wireline_rate_model(g, 1.0), {}, 3)
    idle = PolicyTable(s, np.zeros((1, s.num_states), dtype=np.int64))
    with pytest.raises(MultichainError) as err:
        evaluate_policy(s, idle)
    assert sorted(err.value.class_averages) == [0, 1, 2, 3]


def test_non_convergence_reported(diamond):
    s, _, _ = diamond
    with pytest.raises(ConvergenceError) as err:
        relative_value_iteration(s, tol=1e-14, max_iters=3)
    assert err.value.residual > 0


def test_spec_validation():
    g = NetworkGraph(2, ((0, 1),), (1,))
    rm = wireline_rate_model(g, 1.0)
    with pytest.raises(ValueError):
        MdpSpec(g, rm, {(0, 0): [0.5, 0.4]}, 3)
    with pytest.raises(ValueError):
        MdpSpec(g, rm, {(1, 0): [1.0]}, 3)
    with pytest.raises(ValueError):
        MdpSpec(g, wireline_rate_model(g, 0.5), {}, 3)
    big = NetworkGraph(8, tuple((i, i + 1) for i in range(7)), (7,))
    with pytest.raises(ValueError):
        MdpSpec(big, wireline_rate_model(big, 1.0), {}, 10)


def test_policy_csv(tmp_path, single):
    s, d, V = single
    path = tmp_path / "v.csv"
    write_policy_csv(path, s, V, d, optimal_policy(s, V))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("s,u_0_0,V,d,I") and len(lines) == 12
