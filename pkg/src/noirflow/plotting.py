"""Static figures of a sweep result: inflows, net outflow and densities."""

from __future__ import annotations

from pathlib import Path

from matplotlib import colormaps
from matplotlib.figure import Figure

from .export import outlet_flows

FIGSIZE = (6.4, 4.0)
DPI = 120


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    return Path(path)


def plot_inflows(state, g, path):
    fig = Figure(figsize=FIGSIZE)
    ax = fig.add_subplot()
    for k, j in enumerate(g.inlets):
        ax.plot(state.times, state.u[:, k], label=f"$u_{{{j}}}$")
    ax.set_xlabel("time")
    ax.set_ylabel("inflow")
    ax.set_title("Inlet inflows")
    ax.legend(loc="best", fontsize="small")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_outflow(state, rm, g, u0, path):
    z = outlet_flows(state.x, rm, g)
    fig = Figure(figsize=FIGSIZE)
    ax = fig.add_subplot()
    for k, h in enumerate(g.outlets):
        ax.plot(state.times, z[:, k], lw=1, alpha=0.7, label=f"$z_{{{h}}}$")
    ax.plot(state.times, z.sum(axis=1), color="k", lw=2, label="$z_{net}$")
    ax.axhline(u0, color="gray", ls="--", lw=1, label="$u_0$")
    ax.set_xlabel("time")
    ax.set_ylabel("outflow")
    ax.set_title("Outlet outflow")
    ax.legend(loc="best", fontsize="small")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_densities(state, g, path):
    fig = Figure(figsize=FIGSIZE)
    ax = fig.add_subplot()
    # 13+ roads overflow the default 10-colour cycle
    ax.set_prop_cycle(color=colormaps["tab20"].colors)
    for k, i in enumerate(g.interior):
        ax.plot(state.times, state.x[:, k], lw=1, label=f"$x_{{{i}}}$")
    ax.set_xlabel("time")
    ax.set_ylabel("density")
    ax.set_title("Interior densities")
    ax.legend(loc="center left", bbox_to_anchor=(1.0, 0.5), fontsize="x-small")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def render_report(outdir, state, rm, g, u0):
    outdir = Path(outdir)
    return [
        plot_inflows(state, g, outdir / "inflows.png"),
        plot_outflow(state, rm, g, u0, outdir / "outflow.png"),
        plot_densities(state, g, outdir / "densities.png"),
    ]
