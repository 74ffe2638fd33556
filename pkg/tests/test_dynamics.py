import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noirflow.dynamics import (
    FundamentalDiagram,
    assemble_A,
    assemble_B,
    build_lti,
    build_routing,
    check_density_constraint,
    check_outflow_bound,
    feasible_outflow_bound,
    random_routing,
    spectrum_check,
)
from noirflow.errors import NonFinite, RoutingError
from noirflow.graph import build_graph, check_connectivity, random_graph

REFERENCE_P = {8: 0.67, 9: 0.76, 10: 0.71, 11: 0.59, 12: 0.67, 13: 0.94, 14: 0.94,
               15: 0.83, 16: 0.69, 17: 0.58, 18: 0.97, 19: 0.96, 20: 0.91}


@pytest.fixture
def chain():
    return build_graph(1, 1, 1, [(1, 3), (3, 2)])


@pytest.fixture
def chain2():
    return build_graph(1, 1, 2, [(1, 3), (3, 4), (4, 2)])


def test_minimal_chain_routing_and_matrices(chain):
    rm = build_routing(chain, {3: 0.5}, {(3, 2): 1.0})
    np.testing.assert_array_equal(assemble_A(rm, chain), [[-0.5]])
    np.testing.assert_array_equal(assemble_B(chain), [[1.0]])


def test_two_road_chain_matrix(chain2):
    rm = build_routing(chain2, {3: 1.0, 4: 1.0}, {(3, 4): 1.0, (4, 2): 1.0})
    np.testing.assert_array_equal(assemble_A(rm, chain2), [[-1.0, 0.0], [1.0, -1.0]])


def test_tendencies_not_summing_to_one(chain2):
    with pytest.raises(RoutingError) as exc:
        build_routing(chain2, {3: 0.5, 4: 0.5}, {(3, 4): 0.9, (4, 2): 1.0})
    assert [(v.kind, v.node) for v in exc.value.violations] == [("TendencyRowSumError", 3)]


def test_probability_out_of_range_names_node(chain):
    with pytest.raises(RoutingError) as exc:
        build_routing(chain, {3: 1.5}, {(3, 2): 1.0})
    assert exc.value.violations[0].kind == "ProbabilityOutOfRange"
    assert exc.value.violations[0].node == 3


def test_missing_and_unknown_entries(chain2):
    with pytest.raises(RoutingError) as exc:
        build_routing(chain2, {3: 0.5, 1: 0.4}, {(3, 4): 1.0})
    found = {(v.kind, v.node) for v in exc.value.violations}
    assert ("UnknownEntry", 1) in found
    assert ("MissingEntry", 4) in found


def test_dead_end_interior_road_cannot_be_routed():
    # road 4 has no way out: its tendencies cannot form a distribution
    g = build_graph(1, 1, 2, [(1, 3), (3, 4), (3, 2)])
    with pytest.raises(RoutingError) as exc:
        build_routing(g, {3: 0.5, 4: 0.5}, {(3, 4): 0.5, (3, 2): 0.5})
    assert ("TendencyRowSumError", 4) in {(v.kind, v.node) for v in exc.value.violations}


def test_fixture_uses_reference_outflow_probabilities(fig3):
    assert fig3.routing.p == REFERENCE_P


def test_fixture_matrix_against_entrywise_recomputation(fig3):
    g, rm = fig3.graph, fig3.routing
    A = assemble_A(rm, g)
    nodes = list(g.interior)
    for r, j in enumerate(nodes):
        for c, i in enumerate(nodes):
            # flow into j from i, minus i's own discharge on the diagonal
            expect = rm.p[i] * rm.q.get((i, j), 0.0) - (rm.p[i] if i == j else 0.0)
            assert A[r, c] == pytest.approx(expect, abs=1e-15)


def test_inlet_matrix_of_seven_road_example():
    g = build_graph(2, 2, 3, [(1, 5), (5, 3), (2, 6), (6, 4), (6, 7), (7, 5)])
    B = assemble_B(g)
    expect = np.zeros((3, 2))
    expect[0, 0] = expect[1, 1] = 1.0
    np.testing.assert_array_equal(B, expect)


def test_fixture_inlet_matrix_has_one_entry_per_inlet(fig3):
    B = assemble_B(fig3.graph)
    assert B.sum() == 4 and np.all(B.sum(axis=0) == 1)


def test_random_routing_is_deterministic_and_valid(fig3):
    a = random_routing(fig3.graph, 11)
    b = random_routing(fig3.graph, 11)
    assert a == b
    assert build_routing(fig3.graph, a.p, a.q) == a
    assert random_routing(fig3.graph, 12) != a


def test_random_tendencies_are_distributions_over_many_draws(fig3):
    g = fig3.graph
    worst = 0.0
    for seed in range(10_000):
        rm = random_routing(g, seed)
        for i in g.interior:
            worst = max(worst, abs(sum(rm.q[(i, j)] for j in g.out_neighbors(i)) - 1.0))
            assert 0.2 <= rm.p[i] < 1.0
    assert worst <= 1e-12


def test_spectrum_small_cases():
    r = spectrum_check([[-0.5]])
    assert r.hurwitz and r.in_unit_disk_at_minus_one
    np.testing.assert_allclose(r.eigenvalues, [-0.5])
    r = spectrum_check([[-1.0, 0.0], [1.0, -1.0]])
    assert r.hurwitz
    np.testing.assert_allclose(r.eigenvalues, [-1.0, -1.0])


def test_spectrum_rejects_bad_input():
    with pytest.raises(NonFinite):
        spectrum_check([[np.nan]])
    with pytest.raises(ValueError):
        spectrum_check(np.ones((2, 3)))


def test_unstable_matrix_is_flagged():
    r = spectrum_check([[0.1]])
    assert not r.hurwitz


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 15), st.integers(0, 20), st.integers(0, 2**32 - 1))
def test_connected_random_networks_are_stable(n_in, n_out, n_int, extra, seed):
    g = random_graph(np.random.default_rng(seed), n_in, n_out, n_int, extra)
    assert check_connectivity(g).ok
    A = build_lti(random_routing(g, seed), g).A
    # A + I is column-substochastic, so every eigenvalue sits in the unit disk at -1
    assert np.all(np.abs(A + np.eye(n_int)).sum(axis=0) <= 1.0 + 1e-12)
    r = spectrum_check(A)
    assert r.hurwitz and r.in_unit_disk_at_minus_one


def test_outflow_bound():
    assert feasible_outflow_bound(FundamentalDiagram(100.0, 50.0)) == 0.5
    assert feasible_outflow_bound(FundamentalDiagram(10.0, 20.0)) == 1.0
    with pytest.raises(ValueError):
        FundamentalDiagram(0.0, 1.0)


def test_fixture_passes_outflow_bound(fig3):
    assert check_outflow_bound(fig3.routing, fig3.fd) == []
    tight = FundamentalDiagram(100.0, 90.0)
    assert [i for i, _ in check_outflow_bound(fig3.routing, tight)] == [13, 14, 18, 19, 20]


def test_density_constraint():
    fd = FundamentalDiagram(10.0, 5.0)
    assert check_density_constraint(np.zeros((5, 3)), fd) == []
    traj = np.zeros((5, 3))
    traj[2, 1] = 10.1
    assert check_density_constraint(traj, fd, nodes=[8, 9, 10]) == [(9, 2, 10.1)]


def test_fixture_run_stays_below_density_cap(fig3, fig3_run):
    state, _ = fig3_run
    assert state.x.max() < fig3.fd.rho_max
    assert check_density_constraint(state.x, fig3.fd, fig3.graph.interior) == []
