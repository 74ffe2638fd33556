"""Forward-backward sweep for the inlet-metering optimal control problem.

Each outer iteration solves the inlet QP at every grid point against the
current co-state, fixes the initial co-state from the terminal condition
``lambda(tf) = 0`` and propagates the stacked state/co-state forward.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import gmpy2
import mpmath
import numpy as np

from . import kernel
from .dynamics import build_lti
from .errors import ConnectivityRefused, DimensionMismatch, NonFinite, SingularPhi22
from .graph import STRICT, check_connectivity
from .kernel import TimeGrid, augment
from .qp import water_fill

log = logging.getLogger(__name__)

EARLY_EXIT_TOL = 1e-10


@dataclass(frozen=True)
class CostSpec:
    r: np.ndarray
    w: np.ndarray
    u0: float
    grid: TimeGrid

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", w)
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("density weights must be finite and nonnegative")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("control weights must be finite and positive")
        if not self.u0 > 0:
            raise ValueError(f"net inflow must be positive, got {self.u0}")

    @property
    def R(self):
        return np.diag(self.r)

    @property
    def W(self):
        return np.diag(self.w)

    def check(self, lti):
        if self.r.size != lti.n_states or self.w.size != lti.n_inputs:
            raise DimensionMismatch(
                f"cost has {self.r.size} density and {self.w.size} control weights; "
                f"model has {lti.n_states} states and {lti.n_inputs} inlets")


def hamiltonian(x, u, lam, spec, lti):
    x, u, lam = (np.asarray(v, dtype=float) for v in (x, u, lam))
    if x.shape != (lti.n_states,) or lam.shape != x.shape or u.shape != (lti.n_inputs,):
        raise DimensionMismatch("x, u, lambda do not match the model dimensions")
    running = 0.5 * (x @ (spec.r * x) + u @ (spec.w * u))
    return float(running + lam @ (lti.A @ x + lti.B @ u))


@dataclass(frozen=True)
class Lambda0:
    value: np.ndarray
    exact: np.ndarray
    cond: float
    bits: int


# Exact conversions between gmpy2 and mpmath numbers; mpmath.mpf(mpfr) mishandles zero.
def _mpfr_to_mpf(v):
    man, exp = v.as_mantissa_exp()
    return mpmath.mpf((int(man), int(exp)))


def _mpf_to_mpfr(v):
    sign, man, exp, _ = v._mpf_
    if not man:
        return gmpy2.mpfr(0)
    r = gmpy2.mul_2exp(gmpy2.mpfr(int(man)), int(exp))
    return -r if sign else r


def solve_lambda0(sys, x0, u, grid, bits=None):
    """Initial co-state that makes the propagated co-state vanish at ``tf``.

    ``lambda0 = -Phi22^{-1} (Phi21 x0 + Psi2)`` with every block taken over the
    full horizon.  ``Phi21 x0 + Psi2`` is the co-state end value of a forward
    pass from ``(x0, 0)``, and ``Phi22`` is the ``n``-th power of the one-step
    block, so the result is exact for the discrete recursion used by
    :func:`noirflow.kernel.propagate`.  Everything runs at ``bits`` of
    precision (see :func:`noirflow.kernel.required_bits`).
    """
    k = sys.n_states
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (k,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({k},)")
    if bits is None:
        bits = kernel.required_bits(sys.A_sys[:k, :k], grid.tf - grid.t0)
    _, end = kernel.propagate_hp(sys, np.concatenate([x0, np.zeros(k)]), u, grid, bits, store=False)
    F22 = sys.step_matrix(grid.dt)[k:, k:]
    phi22 = kernel.matpow_hp(F22, grid.n, bits)

    with mpmath.workprec(bits):
        M = mpmath.matrix([[_mpfr_to_mpf(v) for v in row] for row in phi22])
        rhs = mpmath.matrix([-_mpfr_to_mpf(v) for v in end[k:]])
        dense = np.array([[float(v) for v in row] for row in phi22])
        cond = float(np.linalg.cond(dense)) if np.all(np.isfinite(dense)) else np.inf
        if not np.isfinite(cond) or cond * 2.0 ** (-bits) > 1e-6:
            raise SingularPhi22(cond)
        try:
            sol = mpmath.lu_solve(M, rhs)
        except ZeroDivisionError:
            raise SingularPhi22(np.inf) from None
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            exact = np.array([_mpf_to_mpfr(sol[i]) for i in range(k)], dtype=object)
    value = kernel.to_float(exact)
    if not np.all(np.isfinite(value)):
        raise NonFinite("initial co-state is not finite")
    return Lambda0(value, exact, cond, bits)


@dataclass
class SweepState:
    """Trajectories on the grid plus per-iteration diagnostics.

    ``x`` and ``lam`` are ``(n+1, n_states)``, ``u`` is ``(n+1, n_inlets)``.
    ``terminal_residual`` is the co-state max-norm at ``tf`` after forward
    propagation, before the stored final row is set to the boundary value.
    """

    times: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    lambda0: np.ndarray
    iterate: int = 0
    delta_u: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    terminal_residual: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def boundary_active(self):
        """True when some inlet is fully closed at some grid point."""
        return bool(np.any(self.u == 0.0))

    def diagnostics(self):
        return [
            {"iteration": i + 1, "delta_u": du, "cost": c, "lambda_tf_residual": r}
            for i, (du, c, r) in enumerate(zip(self.delta_u, self.cost, self.terminal_residual))
        ]


def total_cost(state, spec):
    """Trapezoid rule for ``0.5 * int (x^T R x + u^T W u) dt`` on the grid."""
    integrand = (state.x * state.x) @ spec.r + (state.u * state.u) @ spec.w
    return 0.5 * float(np.trapezoid(integrand, state.times))


def net_outlet_outflow(state, rm, g):
    weights = np.array([rm.p[i] * sum(v for (a, b), v in rm.q.items() if a == i and g.is_outlet(b))
                        for i in g.interior])
    return state.x @ weights


def _solve_qps(w, F, u0, workers):
    if workers <= 1 or F.shape[0] < 2 * workers:
        return water_fill(w, F, u0)
    chunks = np.array_split(np.arange(F.shape[0]), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda idx: water_fill(w, F[idx], u0), chunks))
    return np.vstack(parts)


def run_sweep(g, rm, spec, x0, m, *, damping=0.0, early_exit=False,
                   connectivity=STRICT, allow_disconnected=False, bits=None, workers=1):
    """Run ``m`` outer sweep iterations and return the final :class:`SweepState`.

    The co-state starts at zero, so the first control is the water-filling
    split of ``u0`` under ``W`` alone.  With ``damping = d`` in (0, 1) the new
    control is ``d u_old + (1 - d) u_qp`` instead of ``u_qp``; 0 means plain
    substitution.  ``early_exit`` stops once the control changes by less than
    ``EARLY_EXIT_TOL`` in max-norm.
    """
    if not 0.0 <= damping < 1.0:
        raise ValueError(f"damping must lie in [0, 1), got {damping}")
    if int(m) != m or m < 1:
        raise ValueError(f"need at least one outer iteration, got {m!r}")
    report = check_connectivity(g, connectivity)
    if not report.ok and not allow_disconnected:
        raise ConnectivityRefused(f"network fails the reachability hypotheses: {report.witness()}")
    lti = build_lti(rm, g)
    spec.check(lti)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (lti.n_states,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({lti.n_states},)")
    if np.any(x0 < 0):
        raise ValueError("initial densities must be nonnegative")

    grid = spec.grid
    sys = augment(lti.A, spec.R, lti.B)
    k = lti.n_states
    if bits is None:
        bits = kernel.required_bits(lti.A, grid.tf - grid.t0)

    state = SweepState(times=grid.times, x=np.tile(x0, (grid.n + 1, 1)),
                       lam=np.zeros((grid.n + 1, k)), u=None, lambda0=np.zeros(k))
    for it in range(1, int(m) + 1):
        u_qp = _solve_qps(spec.w, state.lam @ lti.B, spec.u0, workers)
        if state.u is None:
            u_new = u_qp
            du = float("nan")
        else:
            u_new = u_qp if damping == 0.0 else damping * state.u + (1.0 - damping) * u_qp
            du = float(np.max(np.abs(u_new - state.u)))

        lam0 = solve_lambda0(sys, x0, u_new, grid, bits)
        start = np.concatenate([kernel.to_mp(x0), lam0.exact])
        traj, end = kernel.propagate_hp(sys, start, u_new, grid, bits)
        residual = float(np.max(np.abs(kernel.to_float(end[k:]))))
        lam = traj[:, k:]
        lam[-1] = 0.0

        state.u, state.x, state.lam, state.lambda0 = u_new, traj[:, :k], lam, lam0.value
        state.iterate = it
        state.delta_u.append(du)
        state.cost.append(total_cost(state, spec))
        state.terminal_residual.append(residual)
        log.debug("iteration %d: delta_u=%.3e cost=%.6g lambda(tf)=%.3e", it, du, state.cost[-1], residual)
        if early_exit and du < EARLY_EXIT_TOL:
            state.stopped_early = True
            break
    return state


def sweep_zeta(g, rm, spec, x0, m, zetas, **kwargs):
    """Rerun the sweep with ``R = zeta * I`` for each zeta.

    Returns ``(zeta, max |lambda0|)`` pairs in input order.
    """
    rows = []
    for zeta in zetas:
        if zeta < 0:
            raise ValueError(f"zeta must be nonnegative, got {zeta}")
        scaled = CostSpec(np.full(spec.r.size, float(zeta)), spec.w, spec.u0, spec.grid)
        state = run_sweep(g, rm, scaled, x0, m, **kwargs)
        rows.append((float(zeta), float(np.max(np.abs(state.lambda0)))))
    return rows
