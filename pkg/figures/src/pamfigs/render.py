"""Turn one figure spec into an image file.

Everything here is presentation: empirical columns are plotted as they
arrive, and the only curves computed locally are the closed-form overlays,
which are cross-checked against the oracle tables before being drawn.
Output is byte-stable: fixed style, fixed backend, no embedded timestamps.
"""

from __future__ import annotations

import os
import re

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

from . import overlays
from .errors import SchemaError
from .spec import FigureSpec
from .tables import read_table

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110.0,
    "savefig.dpi": 110.0,
    "font.size": 9.0,
    "axes.titlesize": 10.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8.0,
    "path.simplify": False,
    "svg.hashsalt": "pamfigs",
}

# metadata keys that would otherwise embed a render timestamp
_METADATA = {
    ".png": None,
    ".svg": {"Date": None},
    ".pdf": {"CreationDate": None},
}


def _draw_concentration(ax, spec, tables):
    tab = tables["data"]
    tab.require(("t", "seed", "R", "outside_fraction", "z_center"))
    t = tab.column("t")
    seed = tab.column("seed")
    radius = tab.column("R")
    frac = tab.column("outside_fraction")
    groups = {}
    for i in range(tab.n_rows):
        groups.setdefault((t[i], seed[i]), []).append(i)
    for idx in groups.values():
        idx = np.asarray(idx)
        order = np.argsort(radius[idx])
        ax.plot(radius[idx][order], frac[idx][order], color="steelblue",
                alpha=0.25, linewidth=0.8)
    if spec.style.get("show_mean", True):
        for tv in np.unique(t):
            sel = t == tv
            r_values = np.unique(radius[sel])
            mean = [float(frac[sel & (radius == rv)].mean())
                    for rv in r_values]
            ax.plot(r_values, mean, color="crimson", linewidth=1.8,
                    label=f"mean over replicas, t = {tv:g}")
        ax.legend()
    ax.set_xlabel("ball radius R around the localization center")
    ax.set_ylabel("mass fraction outside the ball")
    ax.set_ylim(-0.02, 1.02)


def _draw_cdf(ax, spec, tables):
    tab = tables["data"]
    family = spec.style["family"]
    theta = float(spec.style["theta"])
    dim = int(spec.style.get("dim", 1))

    if "x" in tab.cells and "cdf" in tab.cells:
        x = tab.column("x")
        ecdf = tab.column("cdf")
        order = np.argsort(x)
        x, ecdf = x[order], ecdf[order]
        label = "empirical CDF"
    else:
        column = spec.style.get("value_column",
                                "psi" if family == "gumbel" else "z0")
        x = np.sort(tab.column(column))
        ecdf = np.arange(1, x.size + 1) / x.size
        label = f"empirical CDF of '{column}' ({x.size} draws)"
    ax.plot(x, ecdf, drawstyle="steps-post", color="steelblue",
            linewidth=1.0, label=label)

    def reference(grid):
        if family == "gumbel":
            return overlays.gumbel_cdf(grid, theta, dim)
        return overlays.laplace_cdf(grid, theta)

    oracle = tables.get("oracle")
    if oracle is not None:
        oracle.require(("theta", "kind", "x", "cdf"))
        kinds = oracle.text_column("kind")
        o_theta = oracle.column("theta")
        keep = np.array([kinds[i] == family and o_theta[i] == theta
                         for i in range(oracle.n_rows)])
        if not keep.any():
            raise SchemaError(
                f"input 'oracle' ({oracle.path}): no rows with kind "
                f"'{family}' and theta {theta:g}")
        grid = oracle.column("x")[keep]
        order = np.argsort(grid)
        grid = grid[order]
        curve = reference(grid)
        overlays.check_against_oracle(family, curve,
                                      oracle.column("cdf")[keep][order])
    else:
        lo, hi = float(x.min()), float(x.max())
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        grid = np.linspace(lo - pad, hi + pad, 401)
        curve = reference(grid)
    ax.plot(grid, curve, color="black", linewidth=1.2, linestyle="--",
            label=f"{family} limit (theta = {theta:g})")
    ax.set_xlabel("value")
    ax.set_ylabel("cumulative probability")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()


def _draw_theta_tail(ax, spec, tables):
    tab = tables["data"]
    tab.require(("s", "n", "n_censored", "mc", "stderr", "bias_bound",
                 "quadrature", "asymptote", "seed"))
    dim = int(spec.style.get("dim", 1))
    s = tab.column("s")
    mc = tab.column("mc")
    se = tab.column("stderr")
    positive = mc > 0
    lower = np.minimum(3.0 * se[positive], 0.999 * mc[positive])
    ax.errorbar(s[positive], mc[positive],
                yerr=np.vstack([lower, 3.0 * se[positive]]),
                fmt="o", markersize=4, capsize=3, color="steelblue",
                linestyle="none", label="Monte Carlo survival (3 se)")
    oracle = tables.get("oracle")
    if oracle is not None:
        oracle.require(("s", "quadrature", "asymptote"))
        o_s = oracle.column("s")
        ax.plot(o_s, oracle.column("quadrature"), color="black",
                linewidth=1.2, label="quadrature")
        mask = o_s > 1.0
        curve = overlays.tail_asymptote(o_s[mask], dim)
        overlays.check_against_oracle("tail-asymptote", curve,
                                      oracle.column("asymptote")[mask])
        grid = o_s[mask]
    else:
        hi = float(s.max()) * 2.0
        grid = np.geomspace(1.05, max(hi, 2.0), 200)
        curve = overlays.tail_asymptote(grid, dim)
    ax.plot(grid, curve, color="crimson", linewidth=1.2, linestyle="--",
            label="leading-order tail")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("s")
    ax.set_ylabel("P(aging variable > s)")
    ax.legend()


def _draw_ztraj(ax, spec, tables):
    tab = tables["data"]
    tab.require(("t", "z", "psi", "lambda_C"))
    t = tab.column("t")
    sites = np.asarray(tab.site_column("z"), dtype=float)
    dim = sites.shape[1]
    coordinate = spec.style.get("coordinate")
    if coordinate is not None and coordinate >= dim:
        raise SchemaError(
            f"style.coordinate {coordinate} is out of range for "
            f"{dim}-dimensional sites in input 'data' ({tab.path})")
    which = range(dim) if coordinate is None else (coordinate,)
    order = np.argsort(t)
    for j in which:
        ax.step(t[order], sites[order, j], where="post", linewidth=1.4,
                label=f"coordinate {j}")
    ax.set_xlabel("t")
    ax.set_ylabel("localization center")
    ax.legend()


def _draw_chi(ax, spec, tables):
    tab = tables["data"]
    tab.require(("R", "chi", "residual", "iterations"))
    radius = tab.column("R")
    chi = tab.column("chi")
    order = np.argsort(radius)
    ax.plot(radius[order], chi[order], color="steelblue", marker="o",
            markersize=4, linewidth=1.4)
    ax.set_xlabel("support radius R")
    ax.set_ylabel("variational cost")
    ax.set_ylim(0.0, 1.1 * float(chi.max()))


def _draw_decay(ax, spec, tables):
    tab = tables["data"]
    coord_cols = [h for h in tab.header if re.fullmatch(r"x\d+", h)]
    if not coord_cols:
        raise SchemaError(
            f"input 'data' ({tab.path}): eigenfunction-decay expects "
            f"coordinate columns x0, x1, ...; found {tab.header}")
    column = spec.style.get("value_column")
    if column is None:
        rest = [h for h in tab.header if h not in coord_cols]
        if not rest:
            raise SchemaError(
                f"input 'data' ({tab.path}): no value column besides the "
                f"coordinates in {tab.header}")
        column = "u" if "u" in rest else rest[-1]
    amplitude = np.abs(tab.column(column))
    if not (amplitude > 0).any():
        raise SchemaError(
            f"input 'data' ({tab.path}): column '{column}' is identically "
            f"zero; nothing to plot on a log scale")
    coords = np.column_stack([tab.column(c) for c in coord_cols])
    peak = coords[int(np.argmax(amplitude))]
    dist = np.abs(coords - peak).sum(axis=1)
    amplitude = amplitude / amplitude.max()
    ax.semilogy(dist, amplitude, "o", markersize=3, alpha=0.6,
                color="steelblue", label=f"|{column}| / max")
    if spec.style.get("fit", True):
        keep = amplitude > 0
        slope, intercept = np.polyfit(dist[keep], np.log(amplitude[keep]), 1)
        grid = np.linspace(0.0, float(dist.max()), 64)
        ax.semilogy(grid, np.exp(intercept + slope * grid), color="crimson",
                    linewidth=1.2, linestyle="--",
                    label=f"fitted rate {-slope:.3f} per site")
    ax.set_xlabel("lattice distance from the peak")
    ax.set_ylabel("normalized amplitude")
    ax.legend()


_DRAWERS = {
    "concentration-vs-R": _draw_concentration,
    "cdf-vs-limit": _draw_cdf,
    "theta-tail-loglog": _draw_theta_tail,
    "z-trajectory": _draw_ztraj,
    "chi-vs-R": _draw_chi,
    "eigenfunction-decay": _draw_decay,
}


def render(figure_spec: FigureSpec) -> str:
    """Read the inputs, draw the figure, write the image; returns its path.

    All input checks run before the output file is opened, so a failed
    render leaves nothing behind.
    """
    figure_spec.validate()
    tables = {role: read_table(path, role=role)
              for role, path in figure_spec.inputs.items()}
    suffix = os.path.splitext(figure_spec.output)[1].lower()
    rc = dict(_RC)
    if "figsize" in figure_spec.style:
        rc["figure.figsize"] = tuple(figure_spec.style["figsize"])
    if "dpi" in figure_spec.style:
        rc["figure.dpi"] = rc["savefig.dpi"] = float(
            figure_spec.style["dpi"])
    with matplotlib.rc_context(rc):
        fig, ax = plt.subplots()
        try:
            _DRAWERS[figure_spec.kind](ax, figure_spec, tables)
            if "title" in figure_spec.style:
                ax.set_title(figure_spec.style["title"])
            fig.tight_layout()
            parent = os.path.dirname(os.path.abspath(figure_spec.output))
            os.makedirs(parent, exist_ok=True)
            fig.savefig(figure_spec.output, metadata=_METADATA[suffix])
        finally:
            plt.close(fig)
    return figure_spec.output
