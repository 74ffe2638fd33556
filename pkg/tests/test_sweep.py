import math

import numpy as np
import pytest

from noirflow.dynamics import build_lti, build_routing
from noirflow.errors import ConnectivityRefused, DimensionMismatch, SingularPhi22
from noirflow.graph import WEAK, build_graph
from noirflow.kernel import TimeGrid, augment, propagate
from noirflow.qp import water_fill
from noirflow.scenario import load_scenario
from noirflow.sweep import (
    CostSpec,
    SweepState,
    hamiltonian,
    net_outlet_outflow,
    run_sweep,
    solve_lambda0,
    sweep_zeta,
    total_cost,
)

from conftest import fixture_path


@pytest.fixture(scope="module")
def chain():
    g = build_graph(1, 1, 1, [(1, 3), (3, 2)])
    return g, build_routing(g, {3: 0.5}, {(3, 2): 1.0})


@pytest.fixture(scope="module")
def scalar():
    return load_scenario(fixture_path("scalar"))


def scalar_lambda0_closed_form(p, u0, x0, T, zeta):
    """Co-state at t0 for x' = -p x + u0, lambda' = p lambda - zeta x, lambda(T) = 0."""
    return zeta * ((x0 - u0 / p) * (1 - math.exp(-2 * p * T)) / (2 * p) + u0 / p * (1 - math.exp(-p * T)) / p)


# --- hamiltonian and cost --------------------------------------------------------

def test_hamiltonian(fig3):
    lti = build_lti(fig3.routing, fig3.graph)
    spec = fig3.cost
    z13, z4 = np.zeros(13), np.zeros(4)
    assert hamiltonian(z13, z4, z13, spec, lti) == 0.0
    rng = np.random.default_rng(0)
    x, u, lam = rng.random(13), rng.random(4), rng.standard_normal(13)
    r = rng.random(13)
    spec = CostSpec(r, np.full(4, 2.0), 20.0, spec.grid)
    assert hamiltonian(x, u, z13, spec, lti) == pytest.approx(0.5 * (r @ (x * x) + 2.0 * u @ u), abs=1e-12)
    expect = sum(0.5 * r[i] * x[i] ** 2 for i in range(13)) + sum(u[j] ** 2 for j in range(4))
    expect += sum(lam[i] * (sum(lti.A[i, k] * x[k] for k in range(13)) + sum(lti.B[i, j] * u[j] for j in range(4)))
                  for i in range(13))
    assert hamiltonian(x, u, lam, spec, lti) == pytest.approx(expect, abs=1e-12)
    with pytest.raises(DimensionMismatch):
        hamiltonian(np.zeros(3), z4, z13, spec, lti)


def test_cost_spec_validation():
    grid = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        CostSpec([-1.0], [1.0], 1.0, grid)
    with pytest.raises(ValueError):
        CostSpec([1.0], [0.0], 1.0, grid)
    with pytest.raises(ValueError):
        CostSpec([1.0], [1.0], 0.0, grid)


def test_total_cost_of_zero_and_constant_trajectories():
    grid = TimeGrid(0.0, 3.0, 30)
    spec = CostSpec([1.0, 2.0], [0.5], 1.0, grid)
    zero = SweepState(grid.times, np.zeros((31, 2)), np.zeros((31, 2)), np.zeros((31, 1)), np.zeros(2))
    assert total_cost(zero, spec) == 0.0
    const = SweepState(grid.times, np.tile([1.0, 2.0], (31, 1)), np.zeros((31, 2)), np.full((31, 1), 4.0), np.zeros(2))
    assert total_cost(const, spec) == pytest.approx(0.5 * 3.0 * (1.0 + 8.0 + 8.0), rel=1e-14)


def test_net_outflow_of_zero_state_and_chain_equilibrium(chain):
    g, rm = chain
    grid = TimeGrid(0.0, 1.0, 4)
    zero = SweepState(grid.times, np.zeros((5, 1)), np.zeros((5, 1)), np.zeros((5, 1)), np.zeros(1))
    np.testing.assert_array_equal(net_outlet_outflow(zero, rm, g), 0.0)
    u0 = 3.0
    eq = SweepState(grid.times, np.full((5, 1), u0 / 0.5), np.zeros((5, 1)), np.full((5, 1), u0), np.zeros(1))
    np.testing.assert_array_equal(net_outlet_outflow(eq, rm, g), u0)


# --- initial co-state ------------------------------------------------------------

def test_lambda0_vanishes_without_density_weight(fig3):
    lti = build_lti(fig3.routing, fig3.graph)
    sys = augment(lti.A, np.zeros((13, 13)), lti.B)
    grid = TimeGrid(0.0, 20.0, 2000)
    u = np.random.default_rng(1).dirichlet(np.ones(4), size=2001) * 20.0
    lam0 = solve_lambda0(sys, fig3.x0, u, grid)
    np.testing.assert_array_equal(lam0.value, 0.0)


def test_lambda0_of_scalar_problem_matches_eigendecomposition():
    sys = augment([[-1.0]], [[1.0]], [[1.0]])
    grid = TimeGrid(0.0, 1.0, 2000)
    lam0 = solve_lambda0(sys, np.array([1.0]), np.zeros((2001, 1)), grid)
    # Phi(1) = V exp(D) V^-1 for A_sys = [[-1, 0], [-1, 1]]
    D, V = np.linalg.eig(np.array([[-1.0, 0.0], [-1.0, 1.0]]))
    Phi = (V * np.exp(D)) @ np.linalg.inv(V)
    oracle = -Phi[1, 0] * 1.0 / Phi[1, 1]
    assert oracle == pytest.approx((1 - math.exp(-2.0)) / 2, abs=1e-14)
    assert abs(lam0.value[0] - oracle) <= 1e-8


def test_lambda0_closes_the_terminal_condition_on_fixture(fig3):
    lti = build_lti(fig3.routing, fig3.graph)
    sys = augment(lti.A, fig3.cost.R, lti.B)
    grid = fig3.cost.grid
    u = np.full((grid.n + 1, 4), 5.0)
    lam0 = solve_lambda0(sys, fig3.x0, u, grid)
    assert lam0.bits > 128 and np.isfinite(lam0.cond)
    # double precision forward propagation diverges from the same start...
    loose = propagate(sys, np.concatenate([fig3.x0, lam0.value]), u, grid)
    assert np.max(np.abs(loose[-1, 13:])) > 1e-8
    # ...which is why the sweep propagates at extended precision (checked in the acceptance suite)


def test_singular_coestate_block_is_reported():
    sys = augment([[-1.0]], [[1.0]], [[1.0]])
    grid = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(SingularPhi22):
        solve_lambda0(sys, np.array([1.0]), np.zeros((11, 1)), grid, bits=8)


def test_lambda0_dimension_check():
    sys = augment([[-1.0]], [[1.0]], [[1.0]])
    with pytest.raises(DimensionMismatch):
        solve_lambda0(sys, np.zeros(2), np.zeros((11, 1)), TimeGrid(0.0, 1.0, 10))


# --- the sweep ---------------------------------------------------------------------

def test_first_iteration_is_weight_only_water_filling(fig3):
    w = np.array([1.0, 2.0, 0.5, 1.0])
    grid = TimeGrid(0.0, 2.0, 50)
    spec = CostSpec(np.ones(13), w, 20.0, grid)
    state = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 1)
    expect = water_fill(w, np.zeros((1, 4)), 20.0)[0]
    np.testing.assert_array_equal(state.u, np.tile(expect, (51, 1)))
    assert state.iterate == 1 and len(state.delta_u) == 1 and math.isnan(state.delta_u[0])


def test_state_invariants_on_fixture(fig3, fig3_run):
    state, _ = fig3_run
    assert state.iterate == 15
    np.testing.assert_array_equal(state.x[0], fig3.x0)
    np.testing.assert_array_equal(state.lam[-1], 0.0)
    assert state.x.min() >= -1e-9
    assert np.all(state.u >= 0.0)
    assert np.max(np.abs(state.u.sum(axis=1) - 20.0)) <= 1e-12


def test_cost_does_not_increase_after_second_iteration(fig3_run):
    state, _ = fig3_run
    c = state.cost
    for a, b in zip(c[1:], c[2:]):
        assert b <= a + 1e-12 * abs(a)


def test_state_trajectory_satisfies_the_dynamics(fig3, fig3_run):
    state, _ = fig3_run
    lti = build_lti(fig3.routing, fig3.graph)
    dt = fig3.cost.grid.dt
    xdot = (state.x[2:] - state.x[:-2]) / (2 * dt)
    rhs = state.x[1:-1] @ lti.A.T + state.u[1:-1] @ lti.B.T
    assert np.max(np.abs(xdot - rhs)) <= 10 * dt


def test_costate_agrees_with_backward_double_precision_recursion(fig3, fig3_run):
    """Independent route to lambda: run the co-state recursion backwards from lambda(tf) = 0."""
    state, _ = fig3_run
    lti = build_lti(fig3.routing, fig3.graph)
    sys = augment(lti.A, fig3.cost.R, lti.B)
    grid = fig3.cost.grid
    F = sys.step_matrix(grid.dt)
    F21, F22 = F[13:, :13], F[13:, 13:]
    half = 0.5 * grid.dt
    lam = np.zeros(13)
    back = np.empty_like(state.lam)
    back[-1] = lam
    for k in range(grid.n - 1, -1, -1):
        lam = np.linalg.solve(F22, lam - F21 @ (state.x[k] + half * lti.B @ state.u[k]))
        back[k] = lam
    scale = np.max(np.abs(state.lam))
    assert np.max(np.abs(back - state.lam)) <= 1e-9 * scale
    np.testing.assert_allclose(back[0], state.lambda0, rtol=1e-9)


def test_runs_are_bitwise_reproducible_and_thread_count_does_not_matter(fig3):
    spec = CostSpec(np.ones(13), np.ones(4), 20.0, TimeGrid(0.0, 5.0, 200))
    kw = dict(damping=0.5)
    a = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 3, **kw)
    b = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 3, **kw)
    c = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 3, workers=4, **kw)
    for s in (b, c):
        np.testing.assert_array_equal(a.u, s.u)
        np.testing.assert_array_equal(a.x, s.x)
        np.testing.assert_array_equal(a.lam, s.lam)
        assert a.cost == s.cost


def test_fixed_point_stays_put_and_early_exit(chain):
    g, rm = chain
    spec = CostSpec([1.0], [1.0], 1.0, TimeGrid(0.0, 5.0, 100))
    state = run_sweep(g, rm, spec, np.zeros(1), 5)
    assert state.delta_u[1] <= 1e-10
    assert all(d <= 1e-9 for d in state.delta_u[1:])
    early = run_sweep(g, rm, spec, np.zeros(1), 5, early_exit=True)
    assert early.stopped_early and early.iterate == 2
    np.testing.assert_array_equal(early.u, state.u)


def test_damping_blends_successive_controls(fig3):
    spec = CostSpec(np.ones(13), np.ones(4), 20.0, TimeGrid(0.0, 5.0, 200))
    one = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 1)
    plain = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 2)
    damped = run_sweep(fig3.graph, fig3.routing, spec, fig3.x0, 2, damping=0.25)
    np.testing.assert_allclose(damped.u, 0.25 * one.u + 0.75 * plain.u, atol=1e-12)


def test_refuses_networks_failing_reachability():
    g = build_graph(2, 2, 3, [(1, 5), (5, 3), (2, 6), (6, 4), (6, 7), (7, 5)])
    rm = build_routing(g, {5: 0.5, 6: 0.6, 7: 0.7}, {(5, 3): 1.0, (6, 4): 0.5, (6, 7): 0.5, (7, 5): 1.0})
    spec = CostSpec(np.ones(3), np.ones(2), 2.0, TimeGrid(0.0, 2.0, 50))
    with pytest.raises(ConnectivityRefused):
        run_sweep(g, rm, spec, np.zeros(3), 1)
    with pytest.raises(ConnectivityRefused):
        run_sweep(g, rm, spec, np.zeros(3), 1, connectivity=WEAK)
    state = run_sweep(g, rm, spec, np.zeros(3), 1, allow_disconnected=True)
    assert state.iterate == 1


def test_bad_arguments(chain):
    g, rm = chain
    spec = CostSpec([1.0], [1.0], 1.0, TimeGrid(0.0, 1.0, 10))
    with pytest.raises(ValueError):
        run_sweep(g, rm, spec, np.zeros(1), 0)
    with pytest.raises(ValueError):
        run_sweep(g, rm, spec, np.zeros(1), 1, damping=1.0)
    with pytest.raises(ValueError):
        run_sweep(g, rm, spec, np.array([-1.0]), 1)
    with pytest.raises(DimensionMismatch):
        run_sweep(g, rm, spec, np.zeros(2), 1)
    with pytest.raises(DimensionMismatch):
        run_sweep(g, rm, CostSpec([1.0, 1.0], [1.0], 1.0, spec.grid), np.zeros(1), 1)


# --- zeta sweep ----------------------------------------------------------------------

def test_zeta_zero_gives_zero(chain):
    g, rm = chain
    spec = CostSpec([1.0], [1.0], 1.0, TimeGrid(0.0, 2.0, 50))
    assert sweep_zeta(g, rm, spec, np.zeros(1), 1, [0.0]) == [(0.0, 0.0)]
    with pytest.raises(ValueError):
        sweep_zeta(g, rm, spec, np.zeros(1), 1, [-1.0])


def test_zeta_sweep_on_scalar_benchmark_matches_closed_form(scalar):
    rows = sweep_zeta(scalar.graph, scalar.routing, scalar.cost, scalar.x0, scalar.m, scalar.zeta)
    T = scalar.cost.grid.tf
    for zeta, value in rows:
        exact = scalar_lambda0_closed_form(0.8, scalar.cost.u0, scalar.x0[0], T, zeta)
        assert abs(value - exact) <= 1e-6
    # a single inlet takes all of u0, so lambda0 is linear in zeta
    by_zeta = dict(rows)
    assert by_zeta[2.0] == pytest.approx(2.0 * by_zeta[1.0], rel=1e-12)
    assert by_zeta[4.0] == pytest.approx(2.0 * by_zeta[2.0], rel=1e-12)
