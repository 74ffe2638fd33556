"""Exact minimiser of a separable quadratic over the scaled simplex
``{u >= 0, sum(u) = u0}`` by water-filling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFinite


@dataclass(frozen=True)
class InletQp:
    w: np.ndarray
    f: np.ndarray
    u0: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        f = np.asarray(self.f, dtype=float)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "f", f)
        if w.shape != f.shape or w.ndim != 1:
            raise DimensionMismatch(f"w {w.shape} and f {f.shape} must be equal-length vectors")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(f)) and np.isfinite(self.u0)):
            raise NonFinite("inlet QP data must be finite")
        if np.any(w <= 0):
            raise ValueError("control weights must be strictly positive")
        if not self.u0 > 0:
            raise ValueError(f"inflow budget must be positive, got {self.u0}")

    def objective(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * np.sum(self.w * u * u, axis=-1) + np.sum(self.f * u, axis=-1)


def water_fill(w, F, u0):
    """Row-wise minimisers of ``0.5 u^T diag(w) u + f^T u`` on the simplex.

    ``F`` is ``(m, n)``, one linear term per row.  With the multiplier ``nu``
    each coordinate is ``max(0, (nu - f_i) / w_i)``; sorting the breakpoints
    ``f_i`` makes the budget equation linear on each segment, and the active
    segment is the last one whose candidate ``nu`` clears its breakpoint.
    """
    w = np.asarray(w, dtype=float)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if not np.all(np.isfinite(F)):
        raise NonFinite("linear term has non-finite entries")
    order = np.argsort(F, axis=1, kind="stable")
    fs = np.take_along_axis(F, order, axis=1)
    ws = w[order]
    inv = np.cumsum(1.0 / ws, axis=1)
    nus = (u0 + np.cumsum(fs / ws, axis=1)) / inv
    active = nus > fs
    k = active.shape[1] - 1 - np.argmax(active[:, ::-1], axis=1)
    nu = nus[np.arange(F.shape[0]), k]
    U = np.maximum(0.0, (nu[:, None] - F) / w)
    # put the rounding residue on the largest entry so the budget holds to the last bit
    top = np.argmax(U, axis=1)
    rows = np.arange(U.shape[0])
    U[rows, top] += u0 - U.sum(axis=1)
    return U


def solve_inlet_qp(qp):
    return water_fill(qp.w, qp.f[None, :], qp.u0)[0]


def kkt_residual(u, qp):
    """Largest violation of the optimality conditions at ``u``.

    The multiplier of the budget constraint is fitted as the mean of
    ``w_i u_i + f_i`` over the positive coordinates.  Zero coordinates need
    ``f_i >= nu``; positive ones need ``w_i u_i + f_i == nu``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != qp.w.shape:
        raise DimensionMismatch(f"u has shape {u.shape}, expected {qp.w.shape}")
    primal = max(abs(u.sum() - qp.u0), float(np.max(np.maximum(0.0, -u))))
    grad = qp.w * u + qp.f
    pos = u > 0
    if not pos.any():
        return max(primal, qp.u0)
    nu = grad[pos].mean()
    stationarity = float(np.max(np.abs(grad[pos] - nu)))
    dual = float(np.max(np.maximum(0.0, nu - qp.f[~pos]), initial=0.0))
    return max(primal, stationarity, dual)
