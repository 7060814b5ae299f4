"""Level-set loss over frequency samples and its gradient in theta.

The loss sums, over the sample set, the squared excess of the error
sigma_max(H(i w) - H_rom(i w, theta)) above the level gamma, scaled by
1/gamma. It is zero exactly when every sample error is at or below the
level, and it is differentiable: the clamped square has zero slope at the
level crossing, and away from it the top singular value of the (generic)
error matrix is simple.

The gradient is assembled by the chain rule through the structured
matrices. For a sample with top singular pair (u, v) of the error matrix,
the derivative of sigma_max against a model matrix X collects
Re(u^H dH_rom/dX v); the resolvent rule turns these into a handful of
adjoint solves with the same factorizations already needed for the value.
Everything is batched over the sample axis; evaluation cost dominates the
whole reduction, so the hot path avoids per-sample Python work.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from .core import (
    DimensionError,
    SingularResolventError,
    ThetaVector,
    vec_to_upper,
)
from .freq import ErrorFunction
from .sampling import SampleSet

SIMPLE_SV_REL_GAP = 1e-8
_K_BASE_CACHE_LIMIT = 8_000_000  # complex entries; ~128 MB hard ceiling

__all__ = [
    "LossContext",
    "NonsmoothPointWarning",
    "loss",
    "loss_gradient",
    "loss_and_gradient",
    "sample_errors",
]


class NonsmoothPointWarning(UserWarning):
    """An active sample has a (numerically) repeated top singular value."""


@lru_cache(maxsize=64)
def _triu_idx(n: int, k: int):
    return np.triu_indices(n, k=k)


@dataclass
class LossContext:
    """Frozen ingredients of one optimization problem at a fixed level.

    ``fom_samples`` maps every frequency in ``samples`` to the complex
    m x m full-model response; the reduced side is re-evaluated from
    theta on each call.
    """

    gamma: float
    fom_samples: Mapping[float, np.ndarray]
    samples: SampleSet
    n: int
    m: int
    _fom_stack: np.ndarray = field(init=False, repr=False)
    _k_base: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        missing = [w for w in self.samples if w not in self.fom_samples]
        if missing:
            raise ValueError(
                f"fom_samples lacks {len(missing)} sample frequencies, "
                f"first missing {missing[0]}"
            )
        stack = np.stack([np.asarray(self.fom_samples[w], dtype=complex)
                          for w in self.samples])
        if stack.shape[1:] != (self.m, self.m):
            raise DimensionError(
                f"responses must be {self.m} x {self.m}, got {stack.shape[1:]}"
            )
        self._fom_stack = stack
        if len(self.samples) * self.n * self.n <= _K_BASE_CACHE_LIMIT:
            self._k_base = (
                1j * self.samples.omegas[:, None, None]
                * np.eye(self.n, dtype=complex)
            )

    @classmethod
    def from_error_function(cls, err: ErrorFunction, samples: SampleSet,
                            gamma: float, n_rom: int) -> "LossContext":
        responses = err.fom_responses(samples.omegas)
        table = {w: r for w, r in zip(samples.omegas, responses)}
        return cls(gamma, table, samples, n_rom, err.m)


def _theta_matrices(ctx: LossContext, theta: ThetaVector):
    if theta.n != ctx.n or theta.m != ctx.m:
        raise DimensionError(
            f"theta is for n={theta.n}, m={theta.m}; context expects "
            f"n={ctx.n}, m={ctx.m}"
        )
    n = ctx.n
    U_j = np.zeros((n, n))
    U_j[_triu_idx(n, 1)] = theta.theta_j
    U_r = np.zeros((n, n))
    U_r[_triu_idx(n, 0)] = theta.theta_r
    U_q = np.zeros((n, n))
    U_q[_triu_idx(n, 0)] = theta.theta_q
    B = theta.theta_b.reshape((n, ctx.m), order="F")
    J = U_j.T - U_j
    R = U_r.T @ U_r
    Q = U_q.T @ U_q
    return J, R, Q, B, U_r, U_q


def _rom_resolvent(ctx: LossContext, J, R, Q, B):
    """Batched resolvent solves K G = B at all sample frequencies."""
    n = ctx.n
    A = (J - R) @ Q
    if ctx._k_base is not None:
        K = ctx._k_base - A
    else:
        K = (
            1j * ctx.samples.omegas[:, None, None] * np.eye(n, dtype=complex)
            - A
        )
    try:
        G = np.linalg.solve(
            K, np.broadcast_to(B.astype(complex), K.shape[:1] + B.shape)
        )
    except np.linalg.LinAlgError as exc:
        raise SingularResolventError(1j * ctx.samples.omegas[0]) from exc
    if not np.isfinite(G).all():
        bad = ~np.isfinite(G).all(axis=(1, 2))
        raise SingularResolventError(1j * ctx.samples.omegas[np.argmax(bad)])
    return A, K, G


def _singular_values(M: np.ndarray) -> np.ndarray:
    """Both singular values of a stack of m x m matrices, descending.

    m <= 2 uses the closed form via the Gram matrix (the hot path);
    larger blocks fall back to LAPACK.
    """
    m = M.shape[-1]
    if m == 1:
        s = np.abs(M[:, 0, 0])
        return s[:, None]
    if m == 2:
        t = np.sum(M.real**2 + M.imag**2, axis=(1, 2))
        det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
        d = det.real**2 + det.imag**2
        root = np.sqrt(np.maximum(t * t - 4.0 * d, 0.0))
        lam_hi = 0.5 * (t + root)
        lam_lo = 0.5 * (t - root)
        return np.sqrt(np.maximum(np.stack([lam_hi, lam_lo], axis=1), 0.0))
    return np.linalg.svd(M, compute_uv=False)


def _error_stack(ctx: LossContext, theta: ThetaVector):
    J, R, Q, B, U_r, U_q = _theta_matrices(ctx, theta)
    A, K, G = _rom_resolvent(ctx, J, R, Q, B)
    QB = Q @ B
    H_rom = QB.T @ G
    E = ctx._fom_stack - H_rom
    return E, (J, R, Q, B, U_r, U_q, K, G, QB)


def sample_errors(ctx: LossContext, theta: ThetaVector) -> np.ndarray:
    """sigma_max of the error matrix at every sample, in sample order."""
    E, _ = _error_stack(ctx, theta)
    return _singular_values(E)[:, 0]


def loss(ctx: LossContext, theta: ThetaVector) -> float:
    """Sum of squared clamped excesses over the level, scaled by 1/gamma."""
    excess = np.maximum(sample_errors(ctx, theta) - ctx.gamma, 0.0)
    return float(np.sum(excess * excess) / ctx.gamma)


def loss_and_gradient(ctx: LossContext, theta: ThetaVector):
    """Loss value together with its gradient with respect to theta."""
    n, m = ctx.n, ctx.m
    E, (J, R, Q, B, U_r, U_q, K, G, QB) = _error_stack(ctx, theta)
    svals = _singular_values(E)
    sig = svals[:, 0]
    excess = np.maximum(sig - ctx.gamma, 0.0)
    value = float(np.sum(excess * excess) / ctx.gamma)

    active = sig > ctx.gamma
    if not active.any():
        return value, np.zeros(len(theta))
    if m >= 2:
        gap = sig[active] - svals[active, 1]
        if np.any(gap <= SIMPLE_SV_REL_GAP * np.maximum(sig[active], 1e-300)):
            warnings.warn(
                "repeated top singular value at an active sample; the "
                "gradient of the selected singular pair is used",
                NonsmoothPointWarning,
                stacklevel=2,
            )

    # Top singular pairs, only where the clamp is active.
    Usv, _, Vh = np.linalg.svd(E[active])
    u1 = Usv[:, :, 0]
    v1 = np.conj(Vh[:, 0, :])
    # Weight of each active sample: d/d sigma of (1/gamma)(sigma - gamma)^2.
    c = (2.0 / ctx.gamma) * excess[active]
    g = (G[active] @ v1[:, :, None])[:, :, 0]
    # Adjoint direction: K^T w = Q B conj(u1), reusing the sample resolvents.
    rhs = np.conj(u1) @ QB.T
    try:
        w = np.linalg.solve(
            np.transpose(K[active], (0, 2, 1)), rhs[:, :, None]
        )[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise SingularResolventError(1j * ctx.samples.omegas[0]) from exc
    a = g @ Q
    t = w @ (J - R)
    bu = np.conj(u1) @ B.T

    # The error matrix is fom - rom, so each sensitivity enters negated.
    cw = c[:, None] * w
    ca = c[:, None] * a
    WA = cw.T @ a
    GJ = -WA.real
    GR = WA.real
    GQ = -((c[:, None] * bu).T @ g + (c[:, None] * t).T @ g).real
    GB = -(ca.T @ np.conj(u1) + cw.T @ v1).real

    grad_j = (GJ.T - GJ)[_triu_idx(n, 1)]
    grad_r = (U_r @ (GR + GR.T))[_triu_idx(n, 0)]
    grad_q = (U_q @ (GQ + GQ.T))[_triu_idx(n, 0)]
    grad_b = GB.ravel(order="F")
    return value, np.concatenate([grad_j, grad_r, grad_q, grad_b])


def loss_gradient(ctx: LossContext, theta: ThetaVector) -> np.ndarray:
    """Gradient of :func:`loss` with respect to the parameter vector."""
    return loss_and_gradient(ctx, theta)[1]
