import cvxpy as cp
import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otcompress.graph import AS_WRITTEN, ORIENTED, Graph, GraphError
from otcompress.transport import (
    INFEASIBLE,
    balance_matrix,
    check_active_tightness,
    dual_objective,
    ot_distance,
    shortest_path_metric,
    w1_oracle,
)

from conftest import random_graph, random_simplex


def flow_lp_oracle(graph, rho0, rho1, convention):
    """Edge-flow LP written out directly with cvxpy (no shared code with the solver)."""
    m = graph.m
    jp = cp.Variable(m, nonneg=True)
    jm = cp.Variable(m, nonneg=True)
    net = [0] * graph.n
    for i, e in enumerate(graph.edges):
        if e.directed:
            net[e.u] = net[e.u] - jp[i]
            net[e.v] = net[e.v] + jp[i]
        elif convention == ORIENTED:
            a, b = min(e.u, e.v), max(e.u, e.v)
            net[a] = net[a] - jp[i] + jm[i]
            net[b] = net[b] + jp[i] - jm[i]
        else:
            # unsigned incidence taken literally: both endpoints receive J- - J+
            net[e.u] = net[e.u] + jm[i] - jp[i]
            net[e.v] = net[e.v] + jm[i] - jp[i]
    cons = [net[v] == rho1[v] - rho0[v] for v in range(graph.n)]
    cons += [jm[i] == 0 for i, e in enumerate(graph.edges) if e.directed]
    prob = cp.Problem(cp.Minimize(graph.costs @ (jp + jm)), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return np.inf
    return prob.value


def test_single_edge():
    g = Graph.from_edges(2, [(0, 1, 1.0)])
    sol = ot_distance(g, [1, 0], [0, 1])
    assert sol.primal_value == pytest.approx(1.0)
    assert sol.jplus.tolist() == [1.0] and sol.jminus.tolist() == [0.0]
    assert abs(sol.potentials[1] - sol.potentials[0]) == pytest.approx(1.0)
    assert check_active_tightness(sol, g).ok


def test_path_example(path3):
    sol = ot_distance(path3, [1, 0, 0], [0, 0, 1])
    assert sol.primal_value == pytest.approx(2.0)
    assert sol.active_edges == (0, 1)
    assert check_active_tightness(sol, path3).ok
    assert w1_oracle(path3, [1, 0, 0], [0, 0, 1]) == pytest.approx(2.0)


def test_k2_half_cost_oracle():
    g = Graph.from_edges(2, [(0, 1, 0.5)])
    assert w1_oracle(g, [1, 0], [0.25, 0.75]) == pytest.approx(0.375)
    assert ot_distance(g, [1, 0], [0.25, 0.75]).primal_value == pytest.approx(0.375)


def test_identity_case(rng):
    g = random_graph(rng, 6)
    rho = random_simplex(rng, 6)
    sol = ot_distance(g, rho, rho)
    assert sol.primal_value == 0.0 and not sol.jplus.any() and not sol.jminus.any()
    assert sol.active_edges == ()
    assert check_active_tightness(sol, g).ok
    assert w1_oracle(g, rho, rho) == pytest.approx(0.0, abs=1e-12)


def test_dual_objective_examples():
    g = Graph.from_edges(2, [(0, 1, 1.0)])
    assert dual_objective([0, 0], [1, 0], [0, 1], g) == 0.0
    assert dual_objective([0, 1], [1, 0], [0, 1], g) == pytest.approx(1.0)
    assert dual_objective([0.3, 0.9], [0.4, 0.6], [0.4, 0.6], g) == 0.0
    with pytest.raises(GraphError, match="edge 0 \\(0, 1\\)"):
        dual_objective([0, 2], [1, 0], [0, 1], g)


def test_directed_edge_blocks_reverse_flow():
    g = Graph.from_edges(2, [(0, 1, 1.0, True)])
    assert ot_distance(g, [1, 0], [0, 1]).primal_value == pytest.approx(1.0)
    sol = ot_distance(g, [0, 1], [1, 0])
    assert sol.status == INFEASIBLE and not sol.feasible
    # dual: only F t <= c is required on a directed edge
    assert dual_objective([5.0, 0.0], [0, 1], [1, 0], g) == pytest.approx(5.0)


def test_directed_cycle_forces_long_way():
    g = Graph.from_edges(3, [(0, 1, 1.0, True), (1, 2, 1.0, True), (2, 0, 1.0, True)])
    sol = ot_distance(g, [0, 1, 0], [1, 0, 0])
    assert sol.primal_value == pytest.approx(2.0)
    assert check_active_tightness(sol, g).ok


def test_as_written_infeasible_on_k2():
    g = Graph.from_edges(2, [(0, 1)])
    sol = ot_distance(g, [1, 0], [0, 1], AS_WRITTEN)
    assert sol.status == INFEASIBLE
    assert np.isinf(flow_lp_oracle(g, [1, 0], [0, 1], AS_WRITTEN))


def test_as_written_feasible_on_odd_cycle():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    rho0, rho1 = np.array([1.0, 0, 0]), np.array([0, 0.5, 0.5])
    sol = ot_distance(g, rho0, rho1, AS_WRITTEN)
    assert sol.feasible
    assert sol.primal_value == pytest.approx(flow_lp_oracle(g, rho0, rho1, AS_WRITTEN), abs=1e-7)
    assert sol.primal_value == pytest.approx(sol.dual_value, abs=1e-8)
    F = g.incidence(AS_WRITTEN)
    assert np.all(np.abs(F @ sol.potentials) <= g.costs + 1e-9)


def test_balance_matrix_reproduces_net_flow(rng):
    g = random_graph(rng, 7, directed_frac=0.3)
    rho0, rho1 = random_simplex(rng, 7), random_simplex(rng, 7)
    sol = ot_distance(g, rho0, rho1)
    if sol.feasible:
        B, fixed = balance_matrix(g)
        x = np.concatenate([sol.jplus, sol.jminus])
        assert np.all(x[fixed] == 0)
        np.testing.assert_allclose(B @ x, rho1 - rho0, atol=1e-9)


def test_shortest_path_metric_matches_networkx(rng):
    for _ in range(20):
        g = random_graph(rng, 8, directed_frac=0.3)
        G = nx.MultiDiGraph()
        G.add_nodes_from(range(g.n))
        for e in g.edges:
            G.add_edge(e.tail, e.head, weight=e.cost)
            if not e.directed:
                G.add_edge(e.head, e.tail, weight=e.cost)
        D = shortest_path_metric(g)
        ref = dict(nx.all_pairs_dijkstra_path_length(G))
        for i in range(g.n):
            for j in range(g.n):
                assert D[i, j] == pytest.approx(ref[i].get(j, np.inf))


def test_infeasible_distribution_rejected(path3):
    with pytest.raises(GraphError):
        ot_distance(path3, [0.5, 0.5, 0.5], [1, 0, 0])


@given(st.integers(2, 8), st.integers(0, 100_000), st.booleans())
def test_invariants_random(n, seed, sparse):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    rho0, rho1 = random_simplex(rng, n, sparse), random_simplex(rng, n, sparse)
    sol = ot_distance(g, rho0, rho1)
    assert np.all(sol.jplus >= 0) and np.all(sol.jminus >= 0)
    assert np.max(np.minimum(sol.jplus, sol.jminus)) <= 1e-12
    F = g.incidence(ORIENTED)
    np.testing.assert_allclose(F.T @ sol.net_flow, rho1 - rho0, atol=1e-9)
    assert np.all(np.abs(F @ sol.potentials) <= g.costs + 1e-9)
    assert abs(sol.primal_value - sol.dual_value) <= 1e-6 * max(1, sol.primal_value)
    assert check_active_tightness(sol, g).ok
    assert sol.primal_value == pytest.approx(w1_oracle(g, rho0, rho1), abs=1e-6)


@given(st.integers(2, 7), st.integers(0, 100_000))
def test_triangle_inequality(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    a, b, c = (random_simplex(rng, n) for _ in range(3))
    w = lambda x, y: ot_distance(g, x, y).primal_value
    assert w(a, c) <= w(a, b) + w(b, c) + 1e-8


@given(st.integers(2, 7), st.integers(0, 100_000))
def test_mixed_graphs_match_edge_lp(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, directed_frac=0.4)
    rho0, rho1 = random_simplex(rng, n), random_simplex(rng, n)
    sol = ot_distance(g, rho0, rho1)
    ref = flow_lp_oracle(g, rho0, rho1, ORIENTED)
    if not sol.feasible:
        assert np.isinf(ref)
        return
    assert sol.primal_value == pytest.approx(ref, abs=1e-6)
    assert sol.primal_value == pytest.approx(w1_oracle(g, rho0, rho1), abs=1e-6)
    assert np.all(sol.jminus[g.directed_mask] == 0)
    assert abs(sol.primal_value - sol.dual_value) <= 1e-6 * max(1, sol.primal_value)
    assert check_active_tightness(sol, g).ok


@given(st.integers(3, 6), st.integers(0, 100_000))
def test_as_written_matches_edge_lp(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, extra=n)
    rho0, rho1 = random_simplex(rng, n), random_simplex(rng, n)
    sol = ot_distance(g, rho0, rho1, AS_WRITTEN)
    ref = flow_lp_oracle(g, rho0, rho1, AS_WRITTEN)
    if not sol.feasible:
        assert np.isinf(ref)
    else:
        assert sol.primal_value == pytest.approx(ref, abs=1e-6)
        assert abs(sol.primal_value - sol.dual_value) <= 1e-6 * max(1, sol.primal_value)
