"""Figure rendering from experiment CSVs.  Display only: every number shown
comes from the CSV rows or the JSON record's fitted constants."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import FIGURE_INPUTS, SchemaError, read_summary, read_table


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str
    summary_path: Optional[str] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_INPUTS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {sorted(FIGURE_INPUTS)}")


def _save(fig, out_path: str):
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _render_decay(table, fitted, options, fig, ax):
    ns = table.column("n")
    bvs = table.column("bv")
    ax.semilogy(ns, bvs, marker="o", ms=3, lw=1, label="BV norm")
    theta = fitted.get("theta_hat")
    if theta:
        anchor = next((b for b in bvs if b > 0), 1.0)
        ref = [anchor * theta**n for n in ns]
        ax.semilogy(ns, ref, "--", lw=1, color="gray",
                    label=f"fitted ratio {theta:.3f} (log {math.log(theta):.3f})")
    ax.set_xlabel("n")
    ax.set_ylabel("BV norm of iterate")
    ax.set_title(options.get("title", "Decay of zero-mean iterates"))
    ax.legend()


def _render_tail(table, fitted, options, fig, ax):
    ts = np.array(table.column("t"))
    ps = np.array(table.column("empirical_prob"))
    keep = (ps > 0) & (ts > 0)
    ax.semilogy(ts[keep] ** 2, ps[keep], marker="s", ms=4, lw=1, label="empirical")
    c = fitted.get("c_fit")
    n = fitted.get("n")
    if c and n:
        grid = np.linspace(0, max(ts) ** 2, 64)
        ax.semilogy(grid, np.exp(-c * n * grid), "--", lw=1, color="gray",
                    label=f"exp(-c n t^2), c={c:.2f}")
    ax.set_xlabel("t^2")
    ax.set_ylabel("exceedance probability")
    ax.set_title(options.get("title", "Large-deviation tail"))
    ax.legend()


def _render_kantorovich(table, fitted, options, fig, ax):
    ns = np.array(table.column("n"))
    means = np.array(table.column("mean_kappa"))
    ax.loglog(ns, means, marker="o", ms=4, lw=1, label="mean distance")
    # the -1/2 reference slope is part of this scenario's definition
    anchor = means[0] if means[0] > 0 else 1.0
    ax.loglog(ns, anchor * (ns / ns[0]) ** -0.5, "--", lw=1, color="gray",
              label="slope -1/2 guide")
    slope = fitted.get("loglog_slope")
    if slope is not None:
        ax.text(0.05, 0.05, f"fitted slope {slope:.3f}", transform=ax.transAxes)
    ax.set_xlabel("n")
    ax.set_ylabel("mean Kantorovich distance")
    ax.set_title(options.get("title", "Empirical-measure distance scaling"))
    ax.legend()


def _render_asclt(table, fitted, options, fig, ax):
    ts = table.column("t")
    emp = table.column("empirical_cdf")
    ref = table.column("normal_cdf")
    ax.plot(ts, emp, lw=1.2, label="log-averaged empirical CDF")
    ax.plot(ts, ref, "--", lw=1, color="gray", label="standard normal")
    ks = fitted.get("ks_median")
    if ks is not None:
        ax.text(0.05, 0.9, f"median KS {ks:.3f}", transform=ax.transAxes)
    ax.set_xlabel("t")
    ax.set_ylabel("CDF")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(options.get("title", "Normalized ergodic sums vs normal"))
    ax.legend()


_RENDERERS = {
    "decay": _render_decay,
    "tail": _render_tail,
    "kantorovich_scaling": _render_kantorovich,
    "asclt_cdf": _render_asclt,
}


def render(spec: FigureSpec) -> str:
    """Validate the CSV against its schema and write the image.  Idempotent:
    identical inputs produce pixel-identical output."""
    scenario, required = FIGURE_INPUTS[spec.kind]
    table = read_table(spec.csv_path, scenario, required)
    fitted = read_summary(spec.summary_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.8), constrained_layout=True)
    _RENDERERS[spec.kind](table, fitted, spec.options, fig, ax)
    _save(fig, spec.out_path)
    return spec.out_path
