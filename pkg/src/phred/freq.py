"""Frequency-domain error evaluation and grid-based peak-gain estimation.

The error between a full model and a reduced candidate is measured as the
largest singular value of the transfer-function difference on the
imaginary axis. Full-model responses are cached per frequency because the
samplers and the loss re-visit the same points many times.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import PHSystem, batch_transfer

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_REFINE_REL_WIDTH = 1e-3

__all__ = ["ErrorFunction", "hinf_estimate", "write_response_csv"]


class ErrorFunction:
    """sigma_max of H(i w) - H_rom(i w) with a per-frequency cache.

    ``fom`` is either a :class:`PHSystem` or a precomputed mapping from
    frequency to the complex m x m response (in which case only tabled
    frequencies can be evaluated). ``rom=None`` means the zero model, so
    the error reduces to the full model's own gain.

    Evaluations are deterministic: the same frequency always returns the
    bit-identical value, whether it arrives alone or inside a batch.
    """

    def __init__(self, fom, rom: PHSystem | None = None, *, cache=None, threads: int = 1):
        self.fom = fom
        self.rom = rom
        self.cache = cache if cache is not None else {}
        self.threads = max(1, int(threads))
        self._value_cache: dict[float, float] = {}
        if isinstance(fom, PHSystem):
            self.m = fom.m
        elif isinstance(fom, Mapping):
            if not fom:
                raise ValueError("empty response table")
            self.m = next(iter(fom.values())).shape[0]
        else:
            raise TypeError("fom must be a PHSystem or a frequency-response mapping")
        if rom is not None and rom.m != self.m:
            raise ValueError(f"port mismatch: fom has {self.m}, rom has {rom.m}")

    # -- responses ---------------------------------------------------------

    def _fom_batch(self, omegas: np.ndarray) -> np.ndarray:
        if isinstance(self.fom, Mapping):
            try:
                return np.stack([np.asarray(self.fom[w]) for w in omegas])
            except KeyError as exc:
                raise ValueError(
                    f"frequency {exc.args[0]} not in the response table"
                ) from None
        if self.threads > 1 and omegas.size > 64:
            out = np.empty((omegas.size, self.m, self.m), dtype=complex)
            bounds = np.linspace(0, omegas.size, self.threads + 1).astype(int)
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futs = {
                    pool.submit(batch_transfer, self.fom, 1j * omegas[a:b]): (a, b)
                    for a, b in zip(bounds[:-1], bounds[1:])
                    if b > a
                }
                for fut, (a, b) in futs.items():
                    out[a:b] = fut.result()
            return out
        return batch_transfer(self.fom, 1j * omegas)

    def fom_responses(self, omegas) -> np.ndarray:
        """Full-model responses at i*omega, stacked; cache-backed."""
        omegas = np.asarray(omegas, dtype=float).ravel()
        missing = [w for w in omegas if w not in self.cache]
        if missing:
            fresh = self._fom_batch(np.asarray(missing))
            for w, resp in zip(missing, fresh):
                self.cache[w] = resp
        return np.stack([self.cache[w] for w in omegas])

    def rom_responses(self, omegas) -> np.ndarray:
        omegas = np.asarray(omegas, dtype=float).ravel()
        if self.rom is None:
            return np.zeros((omegas.size, self.m, self.m), dtype=complex)
        return batch_transfer(self.rom, 1j * omegas)

    def error_matrix(self, omega: float) -> np.ndarray:
        """The complex m x m difference H(i w) - H_rom(i w)."""
        omega = float(omega)
        if omega <= 0.0:
            raise ValueError(f"frequency must be positive, got {omega}")
        arr = np.asarray([omega])
        return (self.fom_responses(arr) - self.rom_responses(arr))[0]

    # -- error values ------------------------------------------------------

    def errors_at(self, omegas) -> np.ndarray:
        """sigma_max of the error at each frequency (batched, cached)."""
        omegas = np.asarray(omegas, dtype=float).ravel()
        if omegas.size and omegas.min(initial=np.inf) <= 0.0:
            raise ValueError("frequencies must be positive")
        out = np.empty(omegas.size)
        missing_idx = [i for i, w in enumerate(omegas) if w not in self._value_cache]
        if missing_idx:
            ws = omegas[missing_idx]
            diff = self.fom_responses(ws) - self.rom_responses(ws)
            sig = np.linalg.svd(diff, compute_uv=False)[:, 0]
            for w, v in zip(ws, sig):
                self._value_cache[w] = float(v)
        for i, w in enumerate(omegas):
            out[i] = self._value_cache[w]
        return out

    def error_at(self, omega: float) -> float:
        """sigma_max of H(i w) - H_rom(i w) for a single positive w."""
        return float(self.errors_at([float(omega)])[0])

    __call__ = error_at


def hinf_estimate(err: ErrorFunction, omega_lo: float, omega_hi: float, n_grid: int):
    """Estimated peak of the error gain over [omega_lo, omega_hi].

    Scans ``n_grid`` log-spaced points, then refines around the grid
    argmax by golden-section search in log frequency until the bracket
    width falls below 1e-3 relative. The returned value is a lower bound
    of the true supremum and never below the coarse-grid maximum.

    Returns ``(gain, omega)`` for the best point found.
    """
    omega_lo, omega_hi = float(omega_lo), float(omega_hi)
    if not 0.0 < omega_lo < omega_hi:
        raise ValueError(f"need 0 < omega_lo < omega_hi, got {omega_lo}, {omega_hi}")
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    grid = np.logspace(np.log10(omega_lo), np.log10(omega_hi), int(n_grid))
    vals = err.errors_at(grid)
    k = int(np.argmax(vals))
    best_w, best_v = float(grid[k]), float(vals[k])

    lo = np.log10(grid[max(k - 1, 0)])
    hi = np.log10(grid[min(k + 1, len(grid) - 1)])

    def f(u: float) -> float:
        return err.error_at(10.0**u)

    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while 10.0 ** (hi - lo) - 1.0 > _REFINE_REL_WIDTH and hi > lo:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        for u, v in ((x1, f1), (x2, f2)):
            if v > best_v:
                best_v, best_w = float(v), float(10.0**u)
    return best_v, best_w


def write_response_csv(path, omegas, sigmas, responses=None) -> None:
    """Frequency-response dump: ``omega,sigma_max`` plus optional entries.

    With ``responses`` (stack of complex m x m matrices) the per-entry
    columns ``re_ij,im_ij`` are appended in row-major entry order.
    """
    omegas = np.asarray(omegas, dtype=float).ravel()
    sigmas = np.asarray(sigmas, dtype=float).ravel()
    header = ["omega", "sigma_max"]
    if responses is not None:
        responses = np.asarray(responses)
        m = responses.shape[1]
        for i in range(m):
            for j in range(m):
                header += [f"re_{i}{j}", f"im_{i}{j}"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for idx, (w, s) in enumerate(zip(omegas, sigmas)):
            row = [repr(float(w)), repr(float(s))]
            if responses is not None:
                for i in range(responses.shape[1]):
                    for j in range(responses.shape[2]):
                        row.append(repr(float(responses[idx, i, j].real)))
                        row.append(repr(float(responses[idx, i, j].imag)))
            fh.write(",".join(row) + "\n")
