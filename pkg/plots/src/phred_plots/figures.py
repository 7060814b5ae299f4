"""The three figure kinds regenerated from run artifacts.

Styles are fixed so reruns over identical inputs produce identical
bytes; SVG is the default output, PNG works through the file suffix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from .io import (
    COMPARISON_COLUMNS,
    CURVE_COLUMNS,
    level_files,
    read_columns,
    read_report,
    read_samples,
)

HIST_BINS = 26
HIST_RANGE = (1e-8, 1e5)


@dataclass(frozen=True)
class FigureSpec:
    """One render job: what to read, which figure, where to write."""

    kind: str  # progress | histogram | hinf
    source: str
    out: str
    bins: int = HIST_BINS

    def __post_init__(self):
        if self.kind not in ("progress", "histogram", "hinf"):
            raise ValueError(f"unknown figure kind {self.kind!r}")


def _save(fig, out) -> None:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".svg":
        fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out)
    plt.close(fig)


def plot_progress(run_dir, out) -> dict:
    """One log-log panel per recorded level: full and reduced gain, the
    error curve, the level line, and the samples used, marked on the
    error curve.

    Returns a summary with the panel count and per-panel marker counts.
    """
    report = read_report(run_dir)
    levels = report["iterations"]
    if not levels:
        raise ValueError(f"{run_dir}: report contains no levels")
    ncols = min(3, len(levels))
    nrows = math.ceil(len(levels) / ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), squeeze=False
    )
    marker_counts = []
    for k, rec in enumerate(levels, start=1):
        ax = axes[(k - 1) // ncols][(k - 1) % ncols]
        curves_path, samples_path = level_files(run_dir, k)
        curves = read_columns(curves_path, CURVE_COLUMNS)
        omegas = curves["omega"]
        ax.loglog(omegas, curves["sigma_fom"], "k-", lw=1.2, label="full")
        ax.loglog(omegas, curves["sigma_rom"], "g--", lw=1.0, label="reduced")
        ax.loglog(omegas, curves["sigma_err"], "b-.", lw=1.0, label="error")
        ax.axhline(rec["gamma"], color="r", ls=":", lw=0.9)
        samples = read_samples(samples_path)
        if samples.size:
            marker_y = np.interp(
                np.log10(samples), np.log10(omegas), curves["sigma_err"]
            )
            ax.loglog(samples, marker_y, "kx", ms=4.0, ls="none")
        marker_counts.append(int(samples.size))
        ax.set_title(f"level {rec['gamma']:.3g}", fontsize=9)
        ax.set_xlabel("frequency")
        if (k - 1) % ncols == 0:
            ax.set_ylabel("gain")
    for j in range(len(levels), nrows * ncols):
        axes[j // ncols][j % ncols].axis("off")
    axes[0][0].legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    _save(fig, out)
    return {"panels": len(levels), "markers": marker_counts}


def plot_histogram(samples_csv, out, bins: int = HIST_BINS) -> dict:
    """Histogram of sample frequencies in log10, fixed bins over the band.

    Returns the counts and bin edges (log10 frequency).
    """
    omegas = read_samples(samples_csv)
    if omegas.size == 0:
        raise ValueError(f"{samples_csv}: no samples to bin")
    lo, hi = np.log10(HIST_RANGE[0]), np.log10(HIST_RANGE[1])
    counts, edges = np.histogram(np.log10(omegas), bins=bins, range=(lo, hi))
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
           color="#4878a8", edgecolor="black", lw=0.4)
    ax.set_xlabel("log10 frequency")
    ax.set_ylabel("samples")
    fig.tight_layout()
    _save(fig, out)
    return {"counts": counts, "edges": edges}


def plot_hinf_comparison(comparison_csv, out) -> dict:
    """Final verification errors against reduced order, one curve per
    sampling variant, log scale on the error axis."""
    cols = read_columns(comparison_csv, COMPARISON_COLUMNS)
    order = np.argsort(cols["r"])
    r = cols["r"][order]
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    ax.semilogy(r, cols["hinf_adaptive"][order], "o-", label="adaptive")
    ax.semilogy(r, cols["hinf_fixed"][order], "s--", label="fixed")
    ax.set_xlabel("reduced order")
    ax.set_ylabel("peak error gain")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out)
    return {
        "r": r,
        "hinf_adaptive": cols["hinf_adaptive"][order],
        "hinf_fixed": cols["hinf_fixed"][order],
    }


def render(spec: FigureSpec) -> dict:
    if spec.kind == "progress":
        return plot_progress(spec.source, spec.out)
    if spec.kind == "histogram":
        return plot_histogram(spec.source, spec.out, bins=spec.bins)
    return plot_hinf_comparison(spec.source, spec.out)
