"""Greedy interpolatory construction of the starting reduced model.

Starting from the zero model, each round locates the frequency where the
current error gain peaks, takes the error's dominant right singular
vector as a tangent direction, and enriches the projection basis with
the real and imaginary parts of the corresponding resolvent solve; the
oblique projection W = Q V (V^T Q V)^(-1) keeps every intermediate model
in port-Hamiltonian form and tangentially interpolates the full model at
the chosen points on both half-axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PHSystem, ThetaVector, extract
from .freq import ErrorFunction, hinf_estimate

__all__ = ["InterpolationState", "RankDeficiencyError", "greedy_init", "theta_from_init"]

DC_CLAMP_BELOW = 1e-10
DC_CLAMP_TO = 1e-8
RANK_TOL = 1e-10


class RankDeficiencyError(RuntimeError):
    """The projection basis lost rank; the requested order is too large."""


@dataclass
class InterpolationState:
    """Chosen points, tangent directions and the projection pair (V, W)."""

    points: list[float] = field(default_factory=list)
    tangents: list[np.ndarray] = field(default_factory=list)
    V: np.ndarray | None = None
    W: np.ndarray | None = None


def _orthonormalize(V: np.ndarray) -> np.ndarray:
    Qf, Rf = np.linalg.qr(V)
    diag = np.abs(np.diag(Rf))
    if diag.min(initial=np.inf) <= RANK_TOL * diag.max(initial=0.0):
        raise RankDeficiencyError(
            "projection basis is numerically rank deficient; "
            "use a smaller reduced order r"
        )
    return Qf


def _project(fom: PHSystem, V: np.ndarray):
    """Reduced matrices under the energy-consistent oblique projection."""
    QV = fom.Q @ V
    Qh = V.T @ QV
    w = np.linalg.eigvalsh(0.5 * (Qh + Qh.T))
    if w.min() <= RANK_TOL * max(w.max(), 1e-300):
        raise RankDeficiencyError(
            "V^T Q V is numerically singular; use a smaller reduced order r"
        )
    W = np.linalg.solve(0.5 * (Qh + Qh.T), QV.T).T
    Jh = W.T @ fom.J @ W
    Rh = W.T @ fom.R @ W
    Bh = W.T @ fom.B
    rom = PHSystem(
        0.5 * (Jh - Jh.T), 0.5 * (Rh + Rh.T), 0.5 * (Qh + Qh.T), Bh
    )
    return rom, W


def greedy_init(fom: PHSystem, r: int, *, grid_lo: float = 1e-8,
                grid_hi: float = 1e5, n_grid: int = 2000,
                fom_cache: dict | None = None, threads: int = 1,
                return_state: bool = False):
    """Initial reduced model of even order r and its interpolation points.

    Peaks are located with the log-grid estimator over
    [grid_lo, grid_hi]; a peak at (numerical) DC is clamped to 1e-8 so the
    geometric-mean sampler downstream stays defined. Each point adds two
    states, so r/2 rounds are run.

    Returns ``(rom, points)``, or ``(rom, points, state)`` with
    ``return_state=True``.
    """
    if r % 2 != 0:
        raise ValueError(f"reduced order must be even, got {r}")
    if not 2 <= r <= fom.n:
        raise ValueError(f"need 2 <= r <= {fom.n}, got {r}")
    cache = fom_cache if fom_cache is not None else {}
    A = fom.dynamics_matrix()
    eye = np.eye(fom.n, dtype=complex)
    state = InterpolationState()
    V = np.zeros((fom.n, 0))
    rom = None
    W = None
    for _ in range(r // 2):
        err = ErrorFunction(fom, rom, cache=cache, threads=threads)
        _, omega = hinf_estimate(err, grid_lo, grid_hi, n_grid)
        if omega <= DC_CLAMP_BELOW:
            omega = DC_CLAMP_TO
        M = err.error_matrix(omega)
        _, _, Vh = np.linalg.svd(M)
        b = np.conj(Vh[0])
        x = np.linalg.solve(1j * omega * eye - A, fom.B @ b)
        x = x / max(np.linalg.norm(x), 1e-300)
        V = np.column_stack([V, x.real, x.imag])
        V = _orthonormalize(V)
        rom, W = _project(fom, V)
        state.points.append(float(omega))
        state.tangents.append(b)
    state.V = V
    state.W = W
    if return_state:
        return rom, list(state.points), state
    return rom, list(state.points)


def theta_from_init(rom: PHSystem) -> ThetaVector:
    """Parameter vector of the initial model (triangular-factor encoding)."""
    return extract(rom)
