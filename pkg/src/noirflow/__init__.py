"""Optimal inlet metering on networks of interconnected roads.

The traffic model is linear, ``x' = A x + B u``, with ``A`` assembled from
outflow and tendency probabilities on a directed road graph.  Inflows are
chosen by a forward-backward sweep that alternates a closed-form inlet QP with
exact propagation of the stacked state/co-state system.
"""

from .dynamics import FundamentalDiagram, RoutingModel, build_lti, build_routing, random_routing, spectrum_check
from .errors import NoirError
from .graph import NoirGraph, build_graph, check_connectivity
from .kernel import TimeGrid, augment, expm, propagate
from .qp import InletQp, kkt_residual, solve_inlet_qp, water_fill
from .scenario import Scenario, load_scenario, parse_scenario, serialize
from .sweep import CostSpec, run_sweep, solve_lambda0, sweep_zeta

__version__ = "0.1.0"
