"""Readers for the documented run-artifact schemas."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

RUN_REPORT = "report.json"
COMPARISON_COLUMNS = [
    "r",
    "seconds_fixed",
    "seconds_adaptive",
    "ratio",
    "n_samples_final",
    "hinf_adaptive",
    "hinf_fixed",
]
CURVE_COLUMNS = ["omega", "sigma_fom", "sigma_rom", "sigma_err"]


class SchemaError(ValueError):
    """An input file does not match its documented schema."""


def read_columns(path, required: list[str]) -> dict[str, np.ndarray]:
    """Load a CSV into named float columns, checking the header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = list(reader)
    out = {}
    for col in required:
        idx = header.index(col)
        out[col] = np.array([float(row[idx]) for row in rows])
    return out


def read_report(run_dir) -> dict:
    path = Path(run_dir) / RUN_REPORT
    if not path.exists():
        raise FileNotFoundError(f"missing run report {path}")
    doc = json.loads(path.read_text())
    for key in ("iterations", "final_gamma"):
        if key not in doc:
            raise SchemaError(f"{path}: missing field {key!r}")
    return doc


def level_files(run_dir, level: int) -> tuple[Path, Path]:
    run_dir = Path(run_dir)
    curves = run_dir / f"level_{level:02d}_curves.csv"
    samples = run_dir / f"level_{level:02d}_samples.csv"
    for p in (curves, samples):
        if not p.exists():
            raise FileNotFoundError(f"missing per-level artifact {p}")
    return curves, samples


def read_samples(path) -> np.ndarray:
    omegas = read_columns(path, ["omega"])["omega"]
    if omegas.size and omegas.min() <= 0.0:
        raise SchemaError(f"{path}: nonpositive frequency entries")
    return omegas
