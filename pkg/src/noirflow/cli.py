"""Command-line front end.

Exit status:
    0  success
    1  a check reported a failure (validate, spectrum, zeta-sweep ordering)
    2  bad command-line usage
    3  scenario file could not be parsed
    4  scenario content failed validation
    5  solver error (singular co-state block, non-finite values, ...)
    6  network refused by the reachability check
    7  file system error
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import export
from .dynamics import (
    FundamentalDiagram,
    build_lti,
    check_outflow_bound,
    feasible_outflow_bound,
    random_routing,
    spectrum_check,
)
from .errors import ConnectivityRefused, NoirError, ParseError, ValidationError
from .graph import STRICT, WEAK, check_connectivity, random_graph
from .kernel import TimeGrid
from .scenario import Scenario, SolverOptions, load_scenario, serialize
from .sweep import CostSpec, net_outlet_outflow, run_sweep, sweep_zeta

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_SOLVER = 5
EXIT_CONNECTIVITY = 6
EXIT_IO = 7


_FIXTURES = resources.files("noirflow") / "fixtures"


class UsageError(Exception):
    pass


def fixture_names():
    return sorted(p.name[: -len(".scenario")] for p in _FIXTURES.iterdir()
                  if p.name.endswith(".scenario"))


def resolve_scenario(arg):
    """A path on disk, or the name of a shipped fixture such as ``fig3``."""
    path = Path(arg)
    if path.exists():
        return path
    name = arg[: -len(".scenario")] if arg.endswith(".scenario") else arg
    if name in fixture_names():
        return _FIXTURES / f"{name}.scenario"
    raise FileNotFoundError(f"no such scenario file or shipped fixture: {arg}")


def _load(arg):
    path = resolve_scenario(arg)
    with resources.as_file(path) as p:
        return load_scenario(p)


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mark(ok):
    return "ok" if ok else "FAIL"


# --- subcommands ---------------------------------------------------------------

def cmd_validate(args):
    sc = _load(args.scenario)
    g, rm = sc.graph, sc.routing
    mode = args.mode or sc.solver.connectivity
    failed = False

    print(f"scenario: {sc.name}")
    print(f"graph: ok (N={g.n}, inlets 1-{g.n_inlets}, outlets {g.n_inlets + 1}-{g.interior_offset}, "
          f"interior {g.interior_offset + 1}-{g.n})")
    print("routing: ok")

    report = check_connectivity(g, mode)
    failed |= not report.ok
    detail = "" if report.ok else f" ({report.witness()})"
    print(f"connectivity [{mode}]: inlets reach interior {_mark(report.inlet_reaches_all_interior)}, "
          f"interior reaches outlets {_mark(report.all_interior_reach_outlets)}{detail}")

    bound = feasible_outflow_bound(sc.fd)
    over = check_outflow_bound(rm, sc.fd)
    failed |= bool(over)
    detail = "" if not over else " (" + ", ".join(f"p_{i}={v:g}" for i, v in over) + ")"
    print(f"outflow bound p <= z_max/rho_max = {bound:.6g}: {_mark(not over)}{detail}")

    spec = spectrum_check(build_lti(rm, g).A)
    ok = spec.hurwitz and spec.in_unit_disk_at_minus_one
    failed |= not ok
    print(f"spectrum: max Re(mu) = {spec.max_real_part:.6g}, max |mu + 1| = {spec.max_disk_radius:.6g}: {_mark(ok)}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _run(sc, args):
    solver = sc.solver
    if args.early_exit is not None:
        solver = replace(solver, early_exit=args.early_exit)
    if args.damping is not None:
        solver = replace(solver, damping=args.damping)
    if args.allow_disconnected:
        solver = replace(solver, allow_disconnected=True)
    m = args.iterations or sc.m
    return solver, m


def cmd_optimize(args):
    sc = _load(args.scenario)
    out = _outdir(args.output)
    solver, m = _run(sc, args)
    start = time.perf_counter()
    state = run_sweep(sc.graph, sc.routing, sc.cost, sc.x0, m, workers=args.workers, **solver.kwargs())
    elapsed = time.perf_counter() - start

    export.write_trajectory(out / "trajectory.csv", state, sc.routing, sc.graph, include_lambda=args.include_lambda)
    export.write_diagnostics(out / "diagnostics.csv", state)
    written = [out / "trajectory.csv", out / "diagnostics.csv"]
    if args.plot:
        from .plotting import render_report
        written += render_report(out, state, sc.routing, sc.graph, sc.cost.u0)

    z = net_outlet_outflow(state, sc.routing, sc.graph)
    print(f"scenario: {sc.name}")
    print(f"iterations: {state.iterate}{' (stopped early)' if state.stopped_early else ''} in {elapsed:.1f} s")
    print(f"cost: {state.cost[-1]:.10g}")
    print(f"max |lambda(tf)| over iterations: {max(state.terminal_residual):.3e}")
    print(f"z_net(tf) = {z[-1]:.6g} (u0 = {sc.cost.u0:g})")
    print("u(tf) = " + ", ".join(f"u_{j}={v:.6g}" for j, v in zip(sc.graph.inlets, state.u[-1])))
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_zeta_sweep(args):
    sc = _load(args.scenario)
    zetas = args.zeta if args.zeta else list(sc.zeta)
    if not zetas:
        raise UsageError("no zeta values: give --zeta or a 'zeta' list in the scenario")
    if any(z < 0 for z in zetas):
        raise UsageError("zeta values must be nonnegative")
    out = _outdir(args.output)
    solver, m = _run(sc, args)
    rows = sweep_zeta(sc.graph, sc.routing, sc.cost, sc.x0, m, zetas, workers=args.workers, **solver.kwargs())
    export.write_zeta_table(out / "zeta.csv", rows)

    print("zeta,max_abs_lambda0")
    for z, v in rows:
        print(f"{z:g},{v:.10g}")
    # ordering is checked along increasing zeta whatever order they were given in
    vals = [v for _, v in sorted(rows)]
    monotone = all(b >= a for a, b in zip(vals, vals[1:]))
    print(f"nondecreasing in zeta: {'yes' if monotone else 'no'}")
    print(f"wrote {out / 'zeta.csv'}")
    return EXIT_OK if monotone else EXIT_CHECK_FAILED


def _generated_scenario(args):
    if args.counts:
        n_in, n_out, n_int = args.counts
        if min(n_in, n_out, n_int) < 1:
            raise UsageError("--counts needs three positive integers")
        g = random_graph(np.random.default_rng(args.seed), n_in, n_out, n_int, args.extra_edges)
        grid = TimeGrid(0.0, 10.0, 1000)
        cost = CostSpec(np.ones(n_int), np.ones(n_in), float(n_in), grid)
        return Scenario(f"generated-{args.seed}", g, random_routing(g, args.seed), cost, 5,
                        np.zeros(n_int), FundamentalDiagram(10.0, 10.0), SolverOptions())
    if not args.topology:
        raise UsageError("give a topology scenario or --counts")
    base = _load(args.topology)
    return replace(base, name=f"{base.name}-seed{args.seed}", routing=random_routing(base.graph, args.seed),
                   routing_seed=None)


def cmd_generate(args):
    text = serialize(_generated_scenario(args))
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_spectrum(args):
    sc = _load(args.scenario)
    spec = spectrum_check(build_lti(sc.routing, sc.graph).A)
    print("eigenvalue,real,imag,abs_mu_plus_1")
    for k, mu in enumerate(sorted(spec.eigenvalues, key=lambda z: (z.real, z.imag))):
        print(f"{k + 1},{mu.real:.10g},{mu.imag:.10g},{abs(mu + 1):.10g}")
    ok = spec.hurwitz and spec.in_unit_disk_at_minus_one
    print(f"max Re(mu) = {spec.max_real_part:.10g}; max |mu + 1| = {spec.max_disk_radius:.10g}: {_mark(ok)}")
    if args.seeds:
        bad = []
        for seed in range(args.seeds):
            r = spectrum_check(build_lti(random_routing(sc.graph, seed), sc.graph).A)
            if not (r.hurwitz and r.in_unit_disk_at_minus_one):
                bad.append(seed)
        print(f"random routings on this topology: {args.seeds - len(bad)}/{args.seeds} pass"
              + (f" (failing seeds: {bad[:10]})" if bad else ""))
        ok = ok and not bad
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --- argument parsing ------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _solver_flags(p):
    p.add_argument("-o", "--output", default="out", help="output directory (default: out)")
    p.add_argument("--early-exit", dest="early_exit", action=argparse.BooleanOptionalAction, default=None,
                   help="stop once the control stops changing (default: from the scenario)")
    p.add_argument("-j", "--workers", type=_positive_int, default=1,
                   help="threads for the per-grid-point QPs (default: 1)")
    p.add_argument("-m", "--iterations", type=_positive_int, default=None,
                   help="outer iterations (default: from the scenario)")
    p.add_argument("--damping", type=float, default=None,
                   help="weight on the previous control in [0, 1) (default: from the scenario)")
    p.add_argument("--allow-disconnected", action="store_true",
                   help="run even if the network fails the reachability check")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="noirflow",
        description="Optimal inlet metering on networks of interconnected roads.",
        epilog=f"Shipped fixtures can be named instead of a path: {', '.join(fixture_names())}.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check graph, routing, reachability, outflow bound and spectrum")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=[STRICT, WEAK], default=None,
                   help="reachability reading (default: from the scenario)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="run the sweep and write trajectory and diagnostics CSVs")
    p.add_argument("scenario")
    _solver_flags(p)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                   help="write inflows.png, outflow.png and densities.png")
    p.add_argument("--lambda", dest="include_lambda", action="store_true",
                   help="add co-state columns to the trajectory CSV")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("zeta-sweep", help="max |lambda0| for R = zeta I over a list of zeta")
    p.add_argument("scenario")
    _solver_flags(p)
    p.add_argument("--zeta", type=float, nargs="+", default=None, help="override the scenario's zeta list")
    p.set_defaults(func=cmd_zeta_sweep)

    p = sub.add_parser("generate", help="write a scenario with randomly drawn routing probabilities")
    p.add_argument("topology", nargs="?", help="scenario whose graph, cost and settings are reused")
    p.add_argument("--counts", type=int, nargs=3, metavar=("N_IN", "N_OUT", "N_INT"),
                   help="draw a random strongly connected topology instead")
    p.add_argument("--extra-edges", type=int, default=0, help="random interior chords with --counts")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", default=None, help="output file (default: stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("spectrum", help="eigenvalues of the traffic matrix")
    p.add_argument("scenario")
    p.add_argument("--seeds", type=int, default=0,
                   help="also check this many random routings on the same topology")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"noirflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConnectivityRefused as exc:
        print(f"refused: {exc} (use --allow-disconnected to run anyway)", file=sys.stderr)
        return EXIT_CONNECTIVITY
    except (NoirError, ValueError, ArithmeticError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
