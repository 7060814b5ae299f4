"""Adaptive refinement of frequency sample sets.

Between each pair of adjacent samples a trial point is placed at the
geometric mean and the two difference quotients against it estimate a
first-order bound on the error's derivative. An interval whose estimated
bound cannot certify that the error stays below max(endpoint errors) +
gamma is split at the trial point; sweeps repeat until no interval
splits. Points are only ever added, never removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MERGE_REL_TOL = 1e-14
DEFAULT_MAX_SAMPLES = 100_000

__all__ = [
    "SampleSet",
    "GrowthLimitError",
    "log_midpoint",
    "certifies_interval",
    "interval_needs_split",
    "adapt_samples",
    "write_samples_csv",
]


class GrowthLimitError(RuntimeError):
    """Sample refinement exceeded the configured growth cap."""

    def __init__(self, samples: "SampleSet", attempted: int, cap: int):
        self.samples = samples
        self.attempted = attempted
        self.cap = cap
        super().__init__(
            f"sample refinement wants {attempted} points, cap is {cap}"
        )


@dataclass(frozen=True)
class SampleSet:
    """Strictly increasing positive frequencies; near-duplicates merged."""

    omegas: np.ndarray

    def __post_init__(self):
        w = np.sort(np.asarray(self.omegas, dtype=float).ravel())
        if w.size == 0:
            raise ValueError("sample set cannot be empty")
        if w[0] <= 0.0 or not np.isfinite(w).all():
            raise ValueError("sample frequencies must be positive and finite")
        keep = np.empty(w.size, dtype=bool)
        keep[0] = True
        keep[1:] = np.diff(w) > MERGE_REL_TOL * w[1:]
        w = w[keep]
        w.flags.writeable = False
        object.__setattr__(self, "omegas", w)

    @classmethod
    def log_spaced(cls, lo: float, hi: float, count: int) -> "SampleSet":
        return cls(np.logspace(np.log10(lo), np.log10(hi), count))

    @classmethod
    def decades(cls, exp_lo: int, exp_hi: int) -> "SampleSet":
        return cls(10.0 ** np.arange(exp_lo, exp_hi + 1, dtype=float))

    def union(self, values) -> "SampleSet":
        return SampleSet(np.concatenate([self.omegas, np.ravel(values)]))

    def __len__(self) -> int:
        return self.omegas.size

    def __iter__(self):
        return iter(self.omegas)

    def contains(self, other: "SampleSet") -> bool:
        """True when every frequency of ``other`` is present here."""
        idx = np.searchsorted(self.omegas, other.omegas)
        idx = np.clip(idx, 0, self.omegas.size - 1)
        return bool(np.all(np.isclose(self.omegas[idx], other.omegas, rtol=1e-13)))


def log_midpoint(w1: float, w2: float) -> float:
    """Geometric mean of two positive frequencies, sqrt(w1 * w2)."""
    w1, w2 = float(w1), float(w2)
    if not 0.0 < w1 < w2:
        raise ValueError(f"need 0 < w1 < w2, got {w1}, {w2}")
    return float(np.sqrt(w1 * w2))


def certifies_interval(bound, w1, w2, e1, e2, tau) -> bool:
    """First-order interval certificate.

    With ``bound`` dominating |E'| on [w1, w2] and endpoint values e1, e2,
    ``bound * (w2 - w1) < 2 gamma* + 2 tau - e1 - e2`` (gamma* the larger
    endpoint value) guarantees E < gamma* + tau on the whole interval.
    """
    gamma_star = max(e1, e2)
    return bound * (w2 - w1) < 2.0 * (gamma_star + tau) - (e1 + e2)


def _values_fn(E):
    """Normalize an error function to a vectorized omegas -> values map."""
    fn = getattr(E, "errors_at", None)
    if fn is not None:
        return fn
    if callable(E):
        return lambda ws: np.asarray([float(E(w)) for w in np.ravel(ws)])
    raise TypeError("E must be an ErrorFunction or a callable")


def interval_needs_split(E, w1: float, w2: float, gamma: float):
    """Decide whether [w1, w2] needs a new sample at its log-midpoint.

    The derivative bound is estimated from the two difference quotients
    against the midpoint value; the midpoint probe is what keeps a near-
    equal pair of endpoint values from masking a peak in between. Returns
    ``(split, w_test)``.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    vals = _values_fn(E)
    w_test = log_midpoint(w1, w2)
    e1, et, e2 = (float(v) for v in vals(np.asarray([w1, w_test, w2])))
    d1 = (et - e1) / (w_test - w1)
    d2 = (e2 - et) / (w2 - w_test)
    dstar = max(d1, d2)
    rhs = 2.0 * (max(e1, e2) + gamma) - (e1 + e2)
    if rhs <= 0.0:
        # Unreachable while gamma > 0 (gamma* dominates both endpoints);
        # kept so a broken caller fails toward more samples, not fewer.
        return True, w_test
    return bool(dstar * (w2 - w1) >= rhs), w_test


def adapt_samples(E, samples: SampleSet, gamma: float,
                  max_samples: int = DEFAULT_MAX_SAMPLES) -> SampleSet:
    """Refine ``samples`` until every adjacent pair passes the certificate.

    Sweeps ascending over adjacent pairs; points inserted during a sweep
    participate from the next sweep on. Midpoint evaluations are memoized
    so an inserted point is not evaluated twice. Raises
    :class:`GrowthLimitError` when the set would exceed ``max_samples``.
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples to adapt")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    vals_fn = _values_fn(E)
    memo: dict[float, float] = {}

    def get(ws: np.ndarray) -> np.ndarray:
        missing = [w for w in ws if w not in memo]
        if missing:
            fresh = vals_fn(np.asarray(missing, dtype=float))
            for w, v in zip(missing, fresh):
                memo[w] = float(v)
        return np.asarray([memo[w] for w in ws])

    omegas = samples.omegas
    while True:
        w1, w2 = omegas[:-1], omegas[1:]
        mids = np.sqrt(w1 * w2)
        # Intervals already at floating-point resolution cannot be split.
        viable = (mids > w1) & (mids < w2)
        e = get(omegas)
        e1, e2 = e[:-1], e[1:]
        et = np.full(mids.shape, np.nan)
        et[viable] = get(mids[viable])
        with np.errstate(invalid="ignore"):
            d1 = (et - e1) / (mids - w1)
            d2 = (e2 - et) / (w2 - mids)
            dstar = np.maximum(d1, d2)
            rhs = 2.0 * (np.maximum(e1, e2) + gamma) - (e1 + e2)
            split = viable & ((dstar * (w2 - w1) >= rhs) | (rhs <= 0.0))
        if not split.any():
            return SampleSet(omegas)
        new = mids[split]
        if omegas.size + new.size > max_samples:
            raise GrowthLimitError(
                SampleSet(omegas), omegas.size + new.size, max_samples
            )
        omegas = np.sort(np.concatenate([omegas, new]))


def write_samples_csv(path, samples: SampleSet) -> None:
    """Single-column ``omega`` dump of a sample set."""
    with open(path, "w") as fh:
        fh.write("omega\n")
        for w in samples.omegas:
            fh.write(f"{float(w)!r}\n")
