"""Routing probabilities, the linear traffic model and its feasibility checks.

Tendency probabilities are keyed by edge ``(i, j)``: ``q[(i, j)]`` is the
fraction of road ``i``'s outflow sent to road ``j``.  Only interior roads
carry routing data; inlet and outlet densities are not states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, RoutingError, Violation

ROW_SUM_TOL = 1e-12
DISK_TOL = 1e-9
RANDOM_P_RANGE = (0.2, 1.0)


@dataclass(frozen=True)
class RoutingModel:
    p: dict
    q: dict

    def to_dict(self):
        return {
            "p": {int(i): float(v) for i, v in sorted(self.p.items())},
            "q": [[int(i), int(j), float(v)] for (i, j), v in sorted(self.q.items())],
        }


def build_routing(g, p, q):
    """Validate outflow and tendency probabilities against ``g``.

    ``p`` maps every interior road to a value in (0, 1]; ``q`` maps every
    edge leaving an interior road to a value in [0, 1], and the values leaving
    each interior road must sum to one.
    """
    problems = []
    p = {int(k): float(v) for k, v in p.items()}
    q = {(int(i), int(j)): float(v) for (i, j), v in q.items()}

    for i in sorted(p):
        if not g.is_interior(i):
            problems.append(Violation("UnknownEntry", i, f"p given for non-interior road {i}", "p"))
    for i in g.interior:
        if i not in p:
            problems.append(Violation("MissingEntry", i, f"no outflow probability for road {i}", "p"))
        elif not (0.0 < p[i] <= 1.0):
            problems.append(Violation("ProbabilityOutOfRange", i, f"p_{i} = {p[i]!r} is outside (0, 1]", "p"))

    for (i, j) in sorted(q):
        if (i, j) not in g.edges or not g.is_interior(i):
            problems.append(Violation("UnknownEntry", i, f"q given for ({i}, {j}), which is not an edge out of an interior road", "q"))
        elif not (0.0 <= q[(i, j)] <= 1.0):
            problems.append(Violation("ProbabilityOutOfRange", i, f"q for ({i}, {j}) = {q[(i, j)]!r} is outside [0, 1]", "q"))
    for i in g.interior:
        outs = sorted(g.out_neighbors(i))
        missing = [j for j in outs if (i, j) not in q]
        for j in missing:
            problems.append(Violation("MissingEntry", i, f"no tendency probability for edge ({i}, {j})", "q"))
        if missing:
            continue
        total = sum(q[(i, j)] for j in outs)
        if abs(total - 1.0) > ROW_SUM_TOL:
            problems.append(Violation("TendencyRowSumError", i,
                                      f"tendencies leaving road {i} sum to {total!r}, not 1", "q"))
    if problems:
        raise RoutingError(problems)
    return RoutingModel(p, q)


def routing_from_dict(g, d):
    q = {(int(i), int(j)): v for i, j, v in d["q"]}
    return build_routing(g, {int(k): v for k, v in d["p"].items()}, q)


def random_routing(g, seed):
    """Draw a valid routing model deterministically from ``seed``.

    Outflow probabilities are uniform on ``RANDOM_P_RANGE``; each road's
    tendencies are uniform on the simplex over its out-neighbours
    (flat Dirichlet).
    """
    rng = np.random.default_rng(seed)
    p, q = {}, {}
    lo, hi = RANDOM_P_RANGE
    for i in g.interior:
        p[i] = float(rng.uniform(lo, hi))
        outs = sorted(g.out_neighbors(i))
        if not outs:
            continue
        w = rng.dirichlet(np.ones(len(outs)))
        # last share absorbs rounding so the row sums to one
        w[-1] = 1.0 - w[:-1].sum()
        for j, v in zip(outs, w):
            q[(i, j)] = float(max(v, 0.0))
    return build_routing(g, p, q)


def assemble_P(rm, g):
    return np.diag([rm.p[i] for i in g.interior])


def assemble_Q(rm, g):
    """Interior-to-interior tendency matrix; column k is the road feeding the flow."""
    off = g.interior_offset
    Q = np.zeros((g.n_interior, g.n_interior))
    for (i, j), v in rm.q.items():
        if g.is_interior(j):
            Q[j - off - 1, i - off - 1] = v
    return Q


def assemble_A(rm, g):
    Q = assemble_Q(rm, g)
    P = assemble_P(rm, g)
    return (Q - np.eye(g.n_interior)) @ P


def assemble_B(g):
    off = g.interior_offset
    B = np.zeros((g.n_interior, g.n_inlets))
    for j in g.inlets:
        for i in g.out_neighbors(j):
            if g.is_interior(i):
                B[i - off - 1, j - 1] = 1.0
    return B


def outlet_fraction(rm, g):
    """Share of each interior road's outflow that leaves the network directly."""
    return np.array([sum(v for (a, b), v in rm.q.items() if a == i and g.is_outlet(b))
                     for i in g.interior])


@dataclass(frozen=True)
class LtiTraffic:
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    outlet_fraction: np.ndarray

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    def outflow_weights(self):
        """Row vector mapping the state to net outlet outflow."""
        return np.diag(self.P) * self.outlet_fraction


def build_lti(rm, g):
    return LtiTraffic(assemble_A(rm, g), assemble_B(g), assemble_P(rm, g),
                      assemble_Q(rm, g), outlet_fraction(rm, g))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    hurwitz: bool
    in_unit_disk_at_minus_one: bool
    max_real_part: float
    max_disk_radius: float


def spectrum_check(A, tol=DISK_TOL):
    """Eigenvalues of ``A`` with the Hurwitz and shifted-disk verdicts.

    Disk membership allows ``tol`` of absolute slack on ``|mu + 1| < 1``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix has non-finite entries")
    mu = np.linalg.eigvals(A)
    max_re = float(np.max(mu.real))
    radius = float(np.max(np.abs(mu + 1.0)))
    return SpectrumReport(mu, max_re < 0.0, radius < 1.0 + tol, max_re, radius)


@dataclass(frozen=True)
class FundamentalDiagram:
    rho_max: float
    z_max: float

    def __post_init__(self):
        for name in ("rho_max", "z_max"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


def feasible_outflow_bound(fd):
    return min(fd.z_max / fd.rho_max, 1.0)


def check_outflow_bound(rm, fd):
    """Interior roads whose outflow probability exceeds the diagram's bound."""
    bound = feasible_outflow_bound(fd)
    return [(i, v) for i, v in sorted(rm.p.items()) if v > bound]


def check_density_constraint(traj, fd, nodes=None):
    """List ``(node, time_index, value)`` for every density above ``rho_max``.

    ``nodes`` labels the trajectory columns; defaults to 1, 2, ...
    """
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    if nodes is None:
        nodes = range(1, traj.shape[1] + 1)
    nodes = list(nodes)
    ks, cols = np.nonzero(traj > fd.rho_max)
    return [(nodes[c], int(k), float(traj[k, c])) for k, c in zip(ks, cols)]
