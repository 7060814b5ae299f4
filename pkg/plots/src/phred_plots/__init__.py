"""Offline figure regeneration from reduction-run artifacts.

These scripts are read-only over their inputs and deterministic: the same
CSV/JSON artifacts always render byte-identical images (no timestamps or
randomized ids are embedded).
"""

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "phred-plots"

from .figures import (  # noqa: E402
    FigureSpec,
    plot_hinf_comparison,
    plot_histogram,
    plot_progress,
    render,
)

__version__ = "0.1.0"
