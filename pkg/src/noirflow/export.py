"""CSV output for sweep results.

Floats are written with ``repr`` so every value reads back bit-identical.
Headers depend only on the network sizes and on whether co-states are
included.
"""

from __future__ import annotations

import csv

import numpy as np


def trajectory_header(g, include_lambda=False):
    cols = ["time"]
    cols += [f"u_{j}" for j in g.inlets]
    cols += [f"x_{i}" for i in g.interior]
    cols += [f"z_{h}" for h in g.outlets]
    cols.append("z_net")
    if include_lambda:
        cols += [f"lambda_{i}" for i in g.interior]
    return cols


def outlet_flows(x, rm, g):
    """Per-outlet outflow ``z_h = sum_i p_i q_(i,h) x_i`` at every grid point."""
    off = g.interior_offset
    W = np.zeros((g.n_interior, g.n_outlets))
    for (i, h), v in rm.q.items():
        if g.is_outlet(h):
            W[i - off - 1, h - g.n_inlets - 1] = rm.p[i] * v
    return np.asarray(x) @ W


def trajectory_table(state, rm, g, include_lambda=False):
    z = outlet_flows(state.x, rm, g)
    parts = [state.times[:, None], state.u, state.x, z, z.sum(axis=1)[:, None]]
    if include_lambda:
        parts.append(state.lam)
    return np.hstack(parts)


def _fmt(v):
    return repr(float(v))


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_trajectory(path, state, rm, g, include_lambda=False):
    table = trajectory_table(state, rm, g, include_lambda)
    write_table(path, trajectory_header(g, include_lambda), (map(float, r) for r in table))


def write_diagnostics(path, state):
    rows = [(d["iteration"], float(d["delta_u"]), float(d["cost"]), float(d["lambda_tf_residual"]))
            for d in state.diagnostics()]
    write_table(path, ["iteration", "delta_u", "cost", "lambda_tf_residual"], rows)


def write_zeta_table(path, rows):
    write_table(path, ["zeta", "max_abs_lambda0"], ((float(z), float(v)) for z, v in rows))


def read_table(path):
    """Header list and float array of a CSV written by this module."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]]).reshape(len(rows) - 1, len(rows[0]))
