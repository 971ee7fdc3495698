"""Figure rendering for the CLI report path.

Figures land next to the JSON/CSV output.  PNG metadata that would embed
a toolchain version is stripped so figure bytes are reproducible too.
"""

from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import machine_loads
from .geometry import _RegionMembership  # membership probing for the raster
from .core import Star


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def render_pair_regions(oracle, instance, pair, report, path, cells: int = 44):
    """Raster of the four allocation categories over the (t1, t2) plane."""
    t1, t2 = pair
    root = report["root"]
    member = _RegionMembership(oracle, instance, Star(root, [t1, t2]))
    span = float(report["tau1"] + report["tau2"]) * 0.8 + 0.05
    grid = np.zeros((cells, cells))
    for iy in range(cells):
        for ix in range(cells):
            x = Fraction(ix * 2 + 1, 2 * cells) * Fraction(span).limit_denominator(10**6)
            y = Fraction(iy * 2 + 1, 2 * cells) * Fraction(span).limit_denominator(10**6)
            alloc = member.allocation({t1: x, t2: y})
            a = alloc.assignment[t1] == root
            b = alloc.assignment[t2] == root
            grid[iy, ix] = {(True, True): 0, (True, False): 1,
                            (False, True): 2, (False, False): 3}[(a, b)]
    fig, ax = plt.subplots(figsize=(4.4, 4))
    ax.imshow(grid, origin="lower", extent=(0, span, 0, span),
              cmap=plt.get_cmap("Pastel1", 4), vmin=-0.5, vmax=3.5)
    ax.axvline(float(report["tau1"]), color="k", lw=0.8, ls="--")
    ax.axhline(float(report["tau2"]), color="k", lw=0.8, ls="--")
    shape = report["shape"].value if hasattr(report["shape"], "value") else report["shape"]
    ax.set_xlabel(f"root value of task {t1}")
    ax.set_ylabel(f"root value of task {t2}")
    ax.set_title(f"pair ({t1}, {t2}): {shape}")
    fig.tight_layout()
    return _save(fig, path)


def render_threshold_curves(samples_by_edge, n, path):
    """Probed threshold points per edge against the x/n and n*x guides."""
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    xs_all = []
    for edge_id, pts in sorted(samples_by_edge.items()):
        xs = [float(x) for x, _ in pts]
        ys = [float(y) for _, y in pts]
        xs_all.extend(xs)
        ax.plot(xs, ys, marker="o", ms=2.5, lw=0.9, label=f"task {edge_id}")
    if xs_all:
        hi = max(xs_all)
        guide = np.linspace(0, hi, 50)
        ax.plot(guide, n * guide, "k--", lw=0.8, label=f"{n}x")
        ax.plot(guide, guide / n, "k:", lw=0.8, label=f"x/{n}")
    ax.set_xlabel("opposite-side value")
    ax.set_ylabel("threshold")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def render_witness(report, path):
    """Machine loads under the mechanism allocation vs the optimum."""
    inst = report.instance
    mech = [float(v) for v in machine_loads(inst, report.allocation)]
    opt = [float(v) for v in machine_loads(inst, report.opt_allocation)]
    idx = np.arange(inst.n)
    width = 0.38
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.bar(idx - width / 2, mech, width, label="mechanism")
    ax.bar(idx + width / 2, opt, width, label="optimum")
    ax.set_xticks(idx)
    ax.set_xlabel("machine")
    ax.set_ylabel("load")
    ax.set_title(f"certified ratio {float(report.ratio):.3f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_boundary_table(table, edge_id, path):
    """Step plot of one quantized threshold table."""
    zs = [float(z) for z, _ in table.values]
    ps = [float(p) for _, p in table.values]
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.step(zs, ps, where="post", marker=".")
    ax.set_xlabel("grid value z")
    ax.set_ylabel("floored threshold")
    ax.set_title(f"task {edge_id} (eps = {table.eps})")
    fig.tight_layout()
    return _save(fig, path)
