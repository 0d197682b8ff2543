"""Figures for propagator curves, constants and verification runs.

Everything renders off-screen through the Agg canvas and writes straight to
a file; no pyplot state is touched, so the helpers are safe to call from
library code and tests.
"""

import math
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
}
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def new_figure(width=6.0, height=None, ncols=1):
    height = width * _GOLDEN if height is None else height
    fig = Figure(figsize=(width, height), constrained_layout=True)
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, ncols)
    for ax in np.atleast_1d(axes):
        for side in ("top", "right"):
            ax.spines[side].set_visible(False)
        ax.tick_params(labelsize=STYLE["font.size"])
    return fig, axes


def save(fig, path, dpi=150):
    """Write ``fig`` to ``path``; the format follows the suffix (png, pdf, svg)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamps or version strings, so repeated runs give identical files
    meta = {"Software": None} if path.suffix.lower() == ".png" else {}
    if path.suffix.lower() == ".pdf":
        meta = {"CreationDate": None, "Producer": None, "Creator": None}
    elif path.suffix.lower() == ".svg":
        meta = {"Date": None, "Creator": None}
    fig.savefig(path, dpi=dpi, metadata=meta)
    return path


def plot_norm_curve(path, times, h, closed_form=None, bound=None, subspace=None, title=None, log_y=False):
    """``h(t)`` with optional exact curve, exponential bound and block norms ``{m: values}``."""
    fig, ax = new_figure()
    ax.plot(times, h, label=r"$\|e^{-Ct}\|_2$", color="C0")
    if closed_form is not None:
        ax.plot(times, closed_form, ls="--", color="k", lw=1.0, label="closed form")
    if bound is not None:
        ax.plot(times, bound, ls=":", color="C3", label="bound")
    for k, (m, vals) in enumerate(sorted((subspace or {}).items())):
        ax.plot(times, vals, color=f"C{k + 1}", alpha=0.8, label=f"block m={m}")
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("propagator norm")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    return save(fig, path)


def plot_kinetic(path, times, curves):
    """Kinetic curves: ``curves`` maps ``a`` to ``(h, closed_form, bound or None)``."""
    fig, ax = new_figure(width=6.5)
    for k, (a, (h, exact, bound)) in enumerate(sorted(curves.items())):
        ax.plot(times, h, color=f"C{k}", label=f"a = {a:g}")
        ax.plot(times, exact, color="k", ls="--", lw=0.8)
        if bound is not None:
            ax.plot(times, bound, color=f"C{k}", ls=":", lw=1.0)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$h(t)$")
    ax.set_title("kinetic FP: numeric (solid), exact (dashed), $c_1 e^{-\\mu t}$ (dotted)")
    ax.legend(frameon=False)
    return save(fig, path)


def plot_best_constant(path, times, scaled, report):
    """``exp((mu - eps) t) h(t)`` with its supremum marked."""
    fig, ax = new_figure()
    ax.plot(times, scaled, color="C0", label=r"$e^{(\mu-\varepsilon)t}\,h(t)$")
    ax.axhline(report.c_numeric, color="C3", ls=":", label=f"c = {report.c_numeric:.8g}")
    if math.isfinite(report.t_argmax):
        ax.plot([report.t_argmax], [report.c_numeric], "o", color="C3", ms=4)
    if report.closed_form is not None:
        ax.axhline(report.closed_form, color="k", ls="--", lw=0.8, label="closed form")
    ax.set_xlabel("t")
    ax.legend(frameon=False)
    return save(fig, path)


def plot_short_time(path, times, deficits, alpha, c):
    """Log-log deficit ``1 - h`` with the fitted power law."""
    fig, ax = new_figure()
    keep = deficits > 0
    ax.loglog(times[keep], deficits[keep], ".", ms=3, color="C0", label=r"$1-h(t)$")
    ax.loglog(times[keep], c * times[keep] ** alpha, color="C3", lw=1.0,
              label=rf"${c:.4g}\,t^{{{alpha:.3f}}}$")
    ax.set_xlabel("t")
    ax.legend(frameon=False)
    return save(fig, path)


def plot_block_norms(path, times, h, block_norms):
    """Block norms next to ``h(t)^m`` (left) and their deviation (right)."""
    fig, (ax, ax2) = new_figure(width=9.0, height=3.4, ncols=2)
    for k, (m, vals) in enumerate(sorted(block_norms.items())):
        ax.plot(times, vals, color=f"C{k}", label=f"m={m}")
        ax.plot(times, h**m, color="k", ls="--", lw=0.6)
        dev = np.abs(vals - h**m)
        ax2.semilogy(times, np.maximum(dev, 1e-18), color=f"C{k}")
    ax.set_xlabel("t")
    ax.set_ylabel("block norm")
    ax.legend(frameon=False)
    ax2.set_xlabel("t")
    ax2.set_ylabel(r"$|\,\|e^{-C^{(m)}t}\| - h^m|$")
    return save(fig, path)


def plot_density(path, xs, ys, values, title=None):
    """Heat map of a two-dimensional density on the grid ``xs`` by ``ys``."""
    fig, ax = new_figure(width=4.5, height=4.0)
    mesh = ax.pcolormesh(xs, ys, values, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return save(fig, path)
