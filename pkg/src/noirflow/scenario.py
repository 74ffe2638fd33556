"""Scenario files: YAML documents bundling every input of one run.

Example (scalars broadcast over roads or inlets)::

    schema_version: 1
    name: chain
    graph: {n_inlets: 1, n_outlets: 1, n_interior: 1, edges: [[1, 3], [3, 2]]}
    routing:
      p: {3: 0.5}
      q: [[3, 2, 1.0]]          # [from, to, share of from's outflow]
    cost: {r: 1.0, w: 1.0, u0: 1.0, t0: 0.0, tf: 5.0, n: 500, m: 3}
    initial_state: {x0: 0.0}
    fundamental_diagram: {rho_max: 10.0, z_max: 5.0}
    solver: {damping: 0.0, early_exit: false, connectivity: strict, allow_disconnected: false}
    zeta: [0.5, 1.0]

``routing`` may instead be ``{seed: <int>}`` to draw a random model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .dynamics import FundamentalDiagram, RoutingModel, build_routing, random_routing
from .errors import GraphError, ParseError, RoutingError, ValidationError
from .graph import STRICT, WEAK, NoirGraph, build_graph
from .kernel import TimeGrid
from .sweep import CostSpec

SCHEMA_VERSION = 1

_TOP = {"schema_version", "name", "graph", "routing", "cost", "initial_state",
        "fundamental_diagram", "solver", "zeta"}
_REQUIRED = _TOP - {"name", "solver", "zeta"}
_SECTIONS = {
    "graph": ({"n_inlets", "n_outlets", "n_interior", "edges"}, set()),
    "cost": ({"r", "w", "u0", "t0", "tf", "n", "m"}, set()),
    "initial_state": ({"x0"}, set()),
    "fundamental_diagram": ({"rho_max", "z_max"}, set()),
    "solver": (set(), {"damping", "early_exit", "connectivity", "allow_disconnected"}),
}


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.0
    early_exit: bool = False
    connectivity: str = STRICT
    allow_disconnected: bool = False

    def kwargs(self):
        return {"damping": self.damping, "early_exit": self.early_exit,
                "connectivity": self.connectivity, "allow_disconnected": self.allow_disconnected}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    graph: NoirGraph
    routing: RoutingModel
    cost: CostSpec
    m: int
    x0: np.ndarray
    fd: FundamentalDiagram
    solver: SolverOptions = field(default_factory=SolverOptions)
    zeta: tuple = ()
    routing_seed: int | None = None

    def to_dict(self):
        routing = {"seed": self.routing_seed} if self.routing_seed is not None else self.routing.to_dict()
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "graph": self.graph.to_dict(),
            "routing": routing,
            "cost": {
                "r": [float(v) for v in self.cost.r],
                "w": [float(v) for v in self.cost.w],
                "u0": float(self.cost.u0),
                "t0": float(self.cost.grid.t0),
                "tf": float(self.cost.grid.tf),
                "n": int(self.cost.grid.n),
                "m": int(self.m),
            },
            "initial_state": {"x0": [float(v) for v in self.x0]},
            "fundamental_diagram": {"rho_max": float(self.fd.rho_max), "z_max": float(self.fd.z_max)},
            "solver": {
                "damping": float(self.solver.damping),
                "early_exit": bool(self.solver.early_exit),
                "connectivity": self.solver.connectivity,
                "allow_disconnected": bool(self.solver.allow_disconnected),
            },
        }
        if self.zeta:
            d["zeta"] = [float(z) for z in self.zeta]
        return d

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict() and self.routing == other.routing


def serialize(scenario):
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=None, width=100)


def _line_of(node, path):
    """1-based line of the YAML node at ``path`` (or of its deepest existing parent)."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if str(k.value) == str(key)), None)
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


class _Reader:
    def __init__(self, text, source):
        self.source = source
        try:
            self.root = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
            raise ParseError(f"{source}: malformed YAML{where}: {getattr(exc, 'problem', exc)}") from None
        if not isinstance(self.data, dict):
            raise ParseError(f"{source}: top level must be a mapping")

    def where(self, *path):
        dotted = ".".join(str(p) for p in path)
        line = _line_of(self.root, path)
        head = f"{self.source}:{line}" if line else self.source
        return f"{head}: {dotted}" if dotted else head

    def fail(self, path, message):
        raise ParseError(f"{self.where(*path)}: {message}")

    def invalid(self, path, cause):
        return ValidationError(self.where(*path), cause)

    def section(self, name, required=True):
        if name not in self.data:
            if required:
                self.fail((), f"missing section '{name}'")
            return None
        value = self.data[name]
        if not isinstance(value, dict):
            self.fail((name,), "must be a mapping")
        if name in _SECTIONS:
            need, optional = _SECTIONS[name]
            for key in value:
                if key not in need | optional:
                    self.fail((name, key), f"unknown key '{key}'")
            for key in sorted(need - set(value)):
                self.fail((name,), f"missing key '{key}'")
        return value

    def number(self, path, value, kind=float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if kind is int:
            if int(value) != value:
                self.fail(path, f"expected an integer, got {value!r}")
            return int(value)
        return float(value)

    def vector(self, path, value, size):
        if isinstance(value, list):
            if len(value) != size:
                self.fail(path, f"expected {size} values, got {len(value)}")
            return np.array([self.number(path + (i,), v) for i, v in enumerate(value)])
        return np.full(size, self.number(path, value))


def parse_scenario(text, source="<scenario>"):
    """Parse and validate scenario YAML text.

    Raises :class:`ParseError` for syntax, schema and type problems and
    :class:`ValidationError` when a module-level validation rejects the
    content; both name the offending field and its line.
    """
    rd = _Reader(text, source)
    data = rd.data
    for key in data:
        if key not in _TOP:
            rd.fail((key,), f"unknown key '{key}'")
    for key in sorted(_REQUIRED - set(data)):
        rd.fail((), f"missing section '{key}'")
    version = data["schema_version"]
    if version != SCHEMA_VERSION:
        rd.fail(("schema_version",), f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    name = str(data.get("name", "scenario"))

    gs = rd.section("graph")
    if not isinstance(gs["edges"], list):
        rd.fail(("graph", "edges"), "must be a list of [from, to] pairs")
    try:
        g = build_graph(gs["n_inlets"], gs["n_outlets"], gs["n_interior"],
                        [tuple(e) if isinstance(e, list) else e for e in gs["edges"]])
    except GraphError as exc:
        raise rd.invalid(("graph",), exc) from None

    rs = data["routing"]
    if not isinstance(rs, dict):
        rd.fail(("routing",), "must be a mapping")
    seed = None
    if set(rs) == {"seed"}:
        seed = rd.number(("routing", "seed"), rs["seed"], int)
        rm = random_routing(g, seed)
    else:
        for key in rs:
            if key not in ("p", "q"):
                rd.fail(("routing", key), f"unknown key '{key}'")
        if set(rs) != {"p", "q"}:
            rd.fail(("routing",), "needs both 'p' and 'q', or only 'seed'")
        if not isinstance(rs["p"], dict):
            rd.fail(("routing", "p"), "must map road index to probability")
        if not isinstance(rs["q"], list):
            rd.fail(("routing", "q"), "must be a list of [from, to, value] triples")
        p = {}
        for k, v in rs["p"].items():
            p[rd.number(("routing", "p", k), k, int)] = rd.number(("routing", "p", k), v)
        q = {}
        for idx, item in enumerate(rs["q"]):
            if not (isinstance(item, list) and len(item) == 3):
                rd.fail(("routing", "q", idx), "expected [from, to, value]")
            i = rd.number(("routing", "q", idx), item[0], int)
            j = rd.number(("routing", "q", idx), item[1], int)
            if (i, j) in q:
                rd.fail(("routing", "q", idx), f"edge ({i}, {j}) listed twice")
            q[(i, j)] = rd.number(("routing", "q", idx), item[2])
        try:
            rm = build_routing(g, p, q)
        except RoutingError as exc:
            v = exc.violations[0]
            if v.field == "p":
                path = ("routing", "p", v.node)
            else:
                rows = [i for i, item in enumerate(rs["q"]) if item[0] == v.node]
                path = ("routing", "q", rows[0]) if rows else ("routing", "q")
            raise rd.invalid(path, exc) from None

    cs = rd.section("cost")
    try:
        grid = TimeGrid(rd.number(("cost", "t0"), cs["t0"]), rd.number(("cost", "tf"), cs["tf"]),
                        rd.number(("cost", "n"), cs["n"], int))
    except ValueError as exc:
        raise rd.invalid(("cost",), exc) from None
    m = rd.number(("cost", "m"), cs["m"], int)
    if m < 1:
        raise rd.invalid(("cost", "m"), ValueError("m must be at least 1"))
    try:
        cost = CostSpec(rd.vector(("cost", "r"), cs["r"], g.n_interior),
                        rd.vector(("cost", "w"), cs["w"], g.n_inlets),
                        rd.number(("cost", "u0"), cs["u0"]), grid)
    except ValueError as exc:
        raise rd.invalid(("cost",), exc) from None

    xs = rd.section("initial_state")
    x0 = rd.vector(("initial_state", "x0"), xs["x0"], g.n_interior)
    if np.any(x0 < 0) or not np.all(np.isfinite(x0)):
        raise rd.invalid(("initial_state", "x0"), ValueError("initial densities must be finite and nonnegative"))

    fs = rd.section("fundamental_diagram")
    try:
        fd = FundamentalDiagram(rd.number(("fundamental_diagram", "rho_max"), fs["rho_max"]),
                                rd.number(("fundamental_diagram", "z_max"), fs["z_max"]))
    except ValueError as exc:
        raise rd.invalid(("fundamental_diagram",), exc) from None

    ss = rd.section("solver", required=False) or {}
    damping = rd.number(("solver", "damping"), ss.get("damping", 0.0))
    if not 0.0 <= damping < 1.0:
        raise rd.invalid(("solver", "damping"), ValueError(f"damping must lie in [0, 1), got {damping}"))
    flags = {}
    for key in ("early_exit", "allow_disconnected"):
        v = ss.get(key, False)
        if not isinstance(v, bool):
            rd.fail(("solver", key), f"expected true or false, got {v!r}")
        flags[key] = v
    mode = ss.get("connectivity", STRICT)
    if mode not in (STRICT, WEAK):
        rd.fail(("solver", "connectivity"), f"expected '{STRICT}' or '{WEAK}', got {mode!r}")
    solver = SolverOptions(damping, flags["early_exit"], mode, flags["allow_disconnected"])

    zeta = data.get("zeta", [])
    if not isinstance(zeta, list):
        rd.fail(("zeta",), "must be a list of numbers")
    zeta = tuple(rd.number(("zeta", i), z) for i, z in enumerate(zeta))
    if any(z < 0 for z in zeta):
        raise rd.invalid(("zeta",), ValueError("zeta values must be nonnegative"))

    return Scenario(name, g, rm, cost, m, x0, fd, solver, zeta, seed)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), source=str(path))
