"""Network of interconnected roads (NOIR) as a validated directed graph.

Roads are numbered from 1 with the cumulative convention used throughout the
package: inlets ``1..n_inlets``, outlets next, interior roads last.  Every
public function takes and returns 1-based indices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GraphError, InvalidIndex, Violation

STRICT = "strict"
WEAK = "weak"


@dataclass(frozen=True)
class NoirGraph:
    n_inlets: int
    n_outlets: int
    n_interior: int
    edges: frozenset = field(default_factory=frozenset)

    @property
    def n(self):
        return self.n_inlets + self.n_outlets + self.n_interior

    @property
    def interior_offset(self):
        """Index of the last outlet; interior road ``i`` is state row ``i - offset - 1``."""
        return self.n_inlets + self.n_outlets

    @property
    def inlets(self):
        return range(1, self.n_inlets + 1)

    @property
    def outlets(self):
        return range(self.n_inlets + 1, self.interior_offset + 1)

    @property
    def interior(self):
        return range(self.interior_offset + 1, self.n + 1)

    def is_inlet(self, i):
        return 1 <= i <= self.n_inlets

    def is_outlet(self, i):
        return self.n_inlets < i <= self.interior_offset

    def is_interior(self, i):
        return self.interior_offset < i <= self.n

    @cached_property
    def _adjacency(self):
        ins = {i: set() for i in range(1, self.n + 1)}
        outs = {i: set() for i in range(1, self.n + 1)}
        for i, j in self.edges:
            outs[i].add(j)
            ins[j].add(i)
        return ({k: frozenset(v) for k, v in ins.items()},
                {k: frozenset(v) for k, v in outs.items()})

    def _check(self, i):
        if not (isinstance(i, (int, np.integer)) and 1 <= i <= self.n):
            raise InvalidIndex(i, self.n)

    def in_neighbors(self, i):
        self._check(i)
        return self._adjacency[0][i]

    def out_neighbors(self, i):
        self._check(i)
        return self._adjacency[1][i]

    def state_index(self, i):
        """Row of interior road ``i`` in the state vector (0-based, internal)."""
        if not self.is_interior(i):
            raise InvalidIndex(i, self.n)
        return i - self.interior_offset - 1

    def to_dict(self):
        return {
            "n_inlets": self.n_inlets,
            "n_outlets": self.n_outlets,
            "n_interior": self.n_interior,
            "edges": [list(e) for e in sorted(self.edges)],
        }


def build_graph(n_inlets, n_outlets, n_interior, edges):
    """Validate counts and edge list and return a :class:`NoirGraph`.

    Raises :class:`GraphError` listing every violated rule: index range,
    self-loops, duplicates, the boundary-road degree rules and the
    admissible neighbour classes.
    """
    problems = []
    for name, value in (("n_inlets", n_inlets), ("n_outlets", n_outlets),
                        ("n_interior", n_interior)):
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
            problems.append(Violation("InvalidCount", None, f"{name} must be a positive integer, got {value!r}"))
    if problems:
        raise GraphError(problems)

    n = n_inlets + n_outlets + n_interior
    seen = set()
    for raw in edges:
        try:
            i, j = raw
        except (TypeError, ValueError):
            problems.append(Violation("InvalidIndex", None, f"edge {raw!r} is not a pair"))
            continue
        bad = [k for k in (i, j)
               if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or not 1 <= k <= n]
        if bad:
            problems.append(Violation("InvalidIndex", None, f"edge ({i}, {j}) has endpoint outside 1..{n}"))
            continue
        i, j = int(i), int(j)
        if i == j:
            problems.append(Violation("SelfLoop", i, f"self-loop on node {i}"))
            continue
        if (i, j) in seen:
            problems.append(Violation("DuplicateEdge", i, f"edge ({i}, {j}) listed more than once"))
            continue
        seen.add((i, j))

    g = NoirGraph(int(n_inlets), int(n_outlets), int(n_interior), frozenset(seen))
    for i in g.inlets:
        if g.in_neighbors(i):
            problems.append(Violation("BoundaryRoadViolation", i,
                                      f"inlet {i} has in-neighbors {sorted(g.in_neighbors(i))}"))
        if len(g.out_neighbors(i)) != 1:
            problems.append(Violation("BoundaryRoadViolation", i,
                                      f"inlet {i} needs exactly one out-neighbor, has {len(g.out_neighbors(i))}"))
    for j in g.outlets:
        if len(g.in_neighbors(j)) != 1:
            problems.append(Violation("BoundaryRoadViolation", j,
                                      f"outlet {j} needs exactly one in-neighbor, has {len(g.in_neighbors(j))}"))
        if g.out_neighbors(j):
            problems.append(Violation("BoundaryRoadViolation", j,
                                      f"outlet {j} has out-neighbors {sorted(g.out_neighbors(j))}"))
    if problems:
        raise GraphError(problems)
    return g


def graph_from_dict(d):
    return build_graph(d["n_inlets"], d["n_outlets"], d["n_interior"], [tuple(e) for e in d["edges"]])


def in_neighbors(g, i):
    return g.in_neighbors(i)


def out_neighbors(g, i):
    return g.out_neighbors(i)


def reachable_from(g, start):
    """Set of nodes reachable from ``start`` by a path of length >= 0."""
    seen = {start}
    queue = deque([start])
    while queue:
        k = queue.popleft()
        for nxt in g.out_neighbors(k):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


@dataclass(frozen=True)
class ConnectivityReport:
    """Outcome of the reachability hypotheses behind the stability result.

    ``unreached`` lists ``(inlet, interior)`` pairs with no connecting path
    (in weak mode, interior nodes no inlet reaches appear as ``(None, i)``);
    ``stranded`` lists ``(interior, outlet)`` pairs with no path.
    """

    mode: str
    inlet_reaches_all_interior: bool
    interior_reaches_all_outlets: dict
    unreached: tuple
    stranded: tuple

    @property
    def all_interior_reach_outlets(self):
        return all(self.interior_reaches_all_outlets.values())

    @property
    def ok(self):
        return self.inlet_reaches_all_interior and self.all_interior_reach_outlets

    def witness(self):
        if self.stranded:
            i, h = self.stranded[0]
            return f"interior node {i} cannot reach outlet {h}"
        if self.unreached:
            j, i = self.unreached[0]
            if j is None:
                return f"interior node {i} is not reachable from any inlet"
            return f"interior node {i} is not reachable from inlet {j}"
        return None


def check_connectivity(g, mode=STRICT):
    """Check both reachability hypotheses.

    ``mode="strict"`` requires every interior road to be reachable from every
    inlet; ``mode="weak"`` only from at least one inlet.  The outlet condition
    is the same in both modes: every interior road reaches every outlet.
    """
    if mode not in (STRICT, WEAK):
        raise ValueError(f"unknown connectivity mode {mode!r}")
    reach = {i: reachable_from(g, i) for i in range(1, g.n + 1)}
    unreached = []
    if mode == STRICT:
        for j in g.inlets:
            unreached.extend((j, i) for i in g.interior if i not in reach[j])
    else:
        hit = set().union(*(reach[j] for j in g.inlets))
        unreached.extend((None, i) for i in g.interior if i not in hit)
    stranded = []
    flags = {}
    for i in g.interior:
        missing = [h for h in g.outlets if h not in reach[i]]
        flags[i] = not missing
        stranded.extend((i, h) for h in missing)
    return ConnectivityReport(mode, not unreached, flags, tuple(unreached), tuple(stranded))


def random_graph(rng, n_inlets, n_outlets, n_interior, extra_edges=0):
    """Random NOIR whose interior is strongly connected.

    A random Hamiltonian cycle through the interior guarantees both
    reachability hypotheses; ``extra_edges`` random interior chords are added
    on top.  Boundary roads attach to uniformly chosen interior roads.
    """
    off = n_inlets + n_outlets
    interior = [off + 1 + k for k in rng.permutation(n_interior)]
    edges = set()
    if n_interior > 1:
        for a, b in zip(interior, interior[1:] + interior[:1]):
            edges.add((a, b))
    for _ in range(extra_edges):
        a, b = rng.choice(interior, size=2, replace=n_interior < 2)
        if a != b:
            edges.add((int(a), int(b)))
    for j in range(1, n_inlets + 1):
        edges.add((j, int(rng.choice(interior))))
    for h in range(n_inlets + 1, off + 1):
        edges.add((int(rng.choice(interior)), h))
    return build_graph(n_inlets, n_outlets, n_interior, sorted(edges))
