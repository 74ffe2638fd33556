"""Matrix exponential and state-transition propagation of the coupled
state/co-state system."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import gmpy2
import numpy as np

from .errors import DimensionMismatch, IndexOutOfGrid, NonFinite

# Pade degree -> largest 1-norm for which it reaches unit roundoff (Higham 2005).
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}


def _pade_uv(M, m):
    b = _PADE[m]
    ident = np.eye(M.shape[0])
    M2 = M @ M
    if m < 13:
        powers = [ident, M2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ M2)
        U = sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
        return M @ U, V
    M4 = M2 @ M2
    M6 = M4 @ M2
    U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2)
             + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
    V = (M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2)
         + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident)
    return U, V


def expm(M):
    """Matrix exponential by scaling and squaring with a diagonal Pade approximant.

    The degree is the smallest of 3, 5, 7, 9, 13 whose threshold bounds the
    1-norm of ``M``; above the degree-13 threshold ``M`` is scaled by ``2**-s``
    and the approximant squared ``s`` times.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expm needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFinite("expm input has non-finite entries")
    if M.size == 0:
        return M.copy()
    norm = np.linalg.norm(M, 1)
    s = 0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            break
    else:
        m = 13
        if norm > _THETA[13]:
            s = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
            M = M / 2.0 ** s
    U, V = _pade_uv(M, m)
    F = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        F = F @ F
    return F


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    tf: float
    n: int

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"need tf > t0, got t0={self.t0}, tf={self.tf}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need an integer n >= 2, got {self.n!r}")

    @property
    def dt(self):
        return (self.tf - self.t0) / self.n

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n + 1)


@dataclass(frozen=True)
class AugmentedSystem:
    A_sys: np.ndarray
    B_sys: np.ndarray

    @property
    def n_states(self):
        return self.A_sys.shape[0] // 2

    @cached_property
    def _step_cache(self):
        return {}

    def step_matrix(self, dt):
        """``expm(A_sys * dt)``, memoised per step length."""
        cache = self._step_cache
        if dt not in cache:
            cache[dt] = expm(self.A_sys * dt)
        return cache[dt]


def augment(A, R, B):
    """Stack ``[[A, 0], [-R, -A^T]]`` and ``[[B], [0]]``."""
    A = np.asarray(A, dtype=float)
    R = np.asarray(R, dtype=float)
    B = np.asarray(B, dtype=float)
    k = A.shape[0]
    if A.shape != (k, k) or R.shape != (k, k) or B.shape[0] != k:
        raise DimensionMismatch(f"A {A.shape}, R {R.shape}, B {B.shape} do not conform")
    A_sys = np.block([[A, np.zeros((k, k))], [-R, -A.T]])
    B_sys = np.vstack([B, np.zeros_like(B)])
    return AugmentedSystem(A_sys, B_sys)


@dataclass(frozen=True)
class TransitionBlocks:
    phi11: np.ndarray
    phi12: np.ndarray
    phi21: np.ndarray
    phi22: np.ndarray

    def assemble(self):
        return np.block([[self.phi11, self.phi12], [self.phi21, self.phi22]])


def split_blocks(Phi):
    k = Phi.shape[0] // 2
    return TransitionBlocks(Phi[:k, :k], Phi[:k, k:], Phi[k:, :k], Phi[k:, k:])


def phi_blocks(sys, delta):
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    return split_blocks(expm(sys.A_sys * delta))


def _check_u(sys, u, grid):
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != sys.B_sys.shape[1]:
        raise DimensionMismatch(f"control has shape {u.shape}, expected (*, {sys.B_sys.shape[1]})")
    if grid is not None and u.shape[0] != grid.n + 1:
        raise DimensionMismatch(f"control has {u.shape[0]} rows, grid has {grid.n + 1} points")
    return u


def psi_forced(sys, u, t_index, grid):
    """Forced response ``int_{t0}^{t_k} Phi(t_k, s) B_sys u(s) ds`` at grid index ``k``.

    Composite trapezoid with ``u`` taken at the grid points; the recursion
    ``Psi_{k+1} = Phi(dt) Psi_k + dt/2 (Phi(dt) B u_k + B u_{k+1})`` is the
    same rule evaluated one panel at a time.
    """
    u = _check_u(sys, u, None)
    if not 0 <= t_index <= grid.n or t_index >= u.shape[0]:
        raise IndexOutOfGrid(f"index {t_index} outside grid 0..{min(grid.n, u.shape[0] - 1)}")
    F = sys.step_matrix(grid.dt)
    half = 0.5 * grid.dt
    Bu = u @ sys.B_sys.T
    psi = np.zeros(sys.A_sys.shape[0])
    for k in range(t_index):
        psi = F @ (psi + half * Bu[k]) + half * Bu[k + 1]
    return psi


def propagate(sys, x_sys0, u, grid):
    """Stacked trajectory at every grid point from ``x_sys0`` under ``u``.

    One exponential ``Phi(dt)`` is formed; each step is
    ``s_{k+1} = Phi(dt) (s_k + dt/2 B u_k) + dt/2 B u_{k+1}``.
    """
    u = _check_u(sys, u, grid)
    x_sys0 = np.asarray(x_sys0, dtype=float)
    if x_sys0.shape != (sys.A_sys.shape[0],):
        raise DimensionMismatch(f"initial stacked state has shape {x_sys0.shape}, expected ({sys.A_sys.shape[0]},)")
    F = sys.step_matrix(grid.dt)
    half = 0.5 * grid.dt
    Bu = u @ sys.B_sys.T
    out = np.empty((grid.n + 1, x_sys0.size))
    out[0] = x_sys0
    s = x_sys0
    for k in range(grid.n):
        s = F @ (s + half * Bu[k]) + half * Bu[k + 1]
        out[k + 1] = s
    return out


# --- extended precision ------------------------------------------------------
#
# The co-state block of the stacked system grows like exp(|Re mu| t) forward
# in time, so double-precision forward propagation from lambda_0 loses all
# digits of the terminal value on horizons of a few tens of time units.  The
# routines below repeat the one-step recursion exactly as ``propagate`` does,
# on the same double-precision step matrix, but in binary floating point of
# ``bits`` mantissa bits.

_to_mpfr = np.frompyfunc(gmpy2.mpfr, 1, 1)
_to_float = np.frompyfunc(float, 1, 1)


def required_bits(A, horizon, base=128):
    """Mantissa bits that absorb the growth of the co-state block over ``horizon``."""
    growth = max(1.0, float(np.max(np.abs(np.linalg.eigvals(A).real)))) * horizon
    return base + int(np.ceil(2.0 * growth / np.log(2.0)))


def to_mp(a):
    return _to_mpfr(np.asarray(a, dtype=float)).astype(object)


def to_float(a):
    return _to_float(a).astype(float)


def propagate_hp(sys, x_sys0, u, grid, bits, store=True):
    """Extended-precision twin of :func:`propagate`.

    ``x_sys0`` may be a float or an object array of ``gmpy2.mpfr``.  Returns
    the trajectory rounded to float (or None when ``store`` is false) and the
    final stacked vector at full precision.
    """
    u = _check_u(sys, u, grid)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        F = to_mp(sys.step_matrix(grid.dt))
        half = gmpy2.mpfr(0.5) * gmpy2.mpfr(grid.dt)
        Bu = to_mp(u @ sys.B_sys.T) * half
        s = np.asarray(x_sys0)
        s = s if s.dtype == object else to_mp(s)
        out = np.empty((grid.n + 1, s.size)) if store else None
        if store:
            out[0] = to_float(s)
        for k in range(grid.n):
            s = F.dot(s + Bu[k]) + Bu[k + 1]
            if store:
                out[k + 1] = to_float(s)
    return out, s


def matpow_hp(M, n, bits):
    """``M**n`` by binary powering at ``bits`` of precision (object array)."""
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        base = to_mp(M)
        result = None
        while n:
            if n & 1:
                result = base.copy() if result is None else result.dot(base)
            n >>= 1
            if n:
                base = base.dot(base)
        if result is None:
            result = to_mp(np.eye(M.shape[0]))
    return result
