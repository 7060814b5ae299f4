"""Quasi-Newton minimization of the level loss and bisection over levels.

The inner solver is BFGS with a strong-Wolfe line search. It stops early
the moment the loss hits exactly zero, because a zero loss means the
current level is met and nothing further is learned from polishing. The
outer loop halves the level after a success, raises it toward the last
working level after a failure, and refines the sample set before each
optimization; levels only ever tighten the bracket.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.optimize

from .core import PHSystem, ThetaVector, assemble
from .freq import ErrorFunction, hinf_estimate
from .objective import LossContext, loss, loss_and_gradient
from .sampling import GrowthLimitError, SampleSet, adapt_samples

__all__ = [
    "GammaBracket",
    "MinimizeOptions",
    "MinimizeResult",
    "IterationRecord",
    "ReductionReport",
    "bfgs_minimize",
    "minimize_loss",
    "reduce",
]

CURVATURE_SKIP_RESET = 5


@dataclass(frozen=True)
class GammaBracket:
    """Bisection state over the level: 0 <= gamma_min < gamma_max."""

    gamma_min: float
    gamma_max: float
    tau_b: float

    def __post_init__(self):
        if not 0.0 <= self.gamma_min < self.gamma_max:
            raise ValueError(
                f"need 0 <= gamma_min < gamma_max, got "
                f"[{self.gamma_min}, {self.gamma_max}]"
            )
        if self.tau_b <= 0.0:
            raise ValueError("tau_b must be positive")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.gamma_min + self.gamma_max)

    @property
    def width(self) -> float:
        return self.gamma_max - self.gamma_min

    def after(self, gamma: float, success: bool) -> "GammaBracket":
        if success:
            return GammaBracket(self.gamma_min, gamma, self.tau_b)
        return GammaBracket(gamma, self.gamma_max, self.tau_b)


@dataclass(frozen=True)
class MinimizeOptions:
    gtol: float = 1e-8
    maxiter: int = 2000
    c1: float = 1e-4
    c2: float = 0.9


@dataclass
class MinimizeResult:
    theta: ThetaVector
    fun: float
    iterations: int
    grad_norm: float
    stagnated: bool = False


class _CachedObjective:
    """Memoizes evaluations; pure value probes may use a cheaper path."""

    def __init__(self, fun_and_grad, fun_only=None):
        self._fg = fun_and_grad
        self._f = fun_only
        self._key = None
        self._val = None
        self._fkey = None
        self._fval = None
        self.n_evals = 0

    def both(self, x):
        key = x.tobytes()
        if key != self._key:
            self._val = self._fg(x)
            self._key = key
            self._fkey, self._fval = key, self._val[0]
            self.n_evals += 1
        return self._val

    def fun(self, x):
        if self._f is None:
            return self.both(x)[0]
        key = x.tobytes()
        if key == self._key:
            return self._val[0]
        if key != self._fkey:
            self._fval = self._f(x)
            self._fkey = key
        return self._fval

    def grad(self, x):
        return np.asarray(self.both(x)[1])


def _line_search(obj, x, p, f, g, f_prev, c1, c2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        alpha, _, _, f_new, _, g_new = scipy.optimize.line_search(
            obj.fun, obj.grad, x, p, gfk=g, old_fval=f, old_old_fval=f_prev,
            c1=c1, c2=c2, maxiter=40,
        )
    return alpha, f_new, g_new


def _backtrack(obj, x, p, f, g, c1):
    """Armijo-only fallback once the Wolfe search has failed twice.

    Bounded in depth: a step that only survives below 2^-20 of the unit
    step is indistinguishable from stagnation.
    """
    slope = g @ p
    if slope >= 0.0:
        return None, None
    alpha = 1.0
    for _ in range(20):
        f_new = obj.fun(x + alpha * p)
        if f_new <= f + c1 * alpha * slope:
            return alpha, f_new
        alpha *= 0.5
    return None, None


def bfgs_minimize(fun_and_grad, x0, options: MinimizeOptions | None = None,
                  fun_only=None):
    """BFGS with strong-Wolfe steps on a generic objective.

    ``fun_and_grad(x) -> (value, gradient)``; ``fun_only`` may provide a
    cheaper value-only path for line-search probes. Terminates on an
    exactly zero value, on max-norm of the gradient at or below ``gtol``,
    or at the iteration cap; on line-search failure the inverse Hessian
    is reset once and the search retried, after which the best point seen
    is returned with ``stagnated`` set.

    Returns ``(x, value, iterations, grad_norm, stagnated)``.
    """
    opts = options or MinimizeOptions()
    obj = _CachedObjective(fun_and_grad, fun_only)
    x = np.asarray(x0, dtype=float).copy()
    f, g = obj.both(x)
    g = np.asarray(g, dtype=float)
    best_f, best_x, best_g = f, x.copy(), g
    n = x.size
    H = np.eye(n)
    f_prev = f + max(np.linalg.norm(g) / 2.0, 1.0)
    skips = 0
    gtol_strikes = 0
    rescues = 0
    stagnated = False
    iterations = 0
    while iterations < opts.maxiter:
        if f == 0.0:
            break
        if np.max(np.abs(g)) <= opts.gtol:
            # Near the level boundary the gradient scales with the excess
            # itself, so a small gradient does not yet prove a minimum.
            # Probe once more along steepest descent; stop only when the
            # probe confirms stationarity (or on the second strike).
            gtol_strikes += 1
            if gtol_strikes >= 2:
                break
            H = np.eye(n)
            p = -g
        else:
            gtol_strikes = 0
            p = -H @ g
            if p @ g >= 0.0:
                H = np.eye(n)
                p = -g
        alpha, f_new, g_new = _line_search(obj, x, p, f, g, f_prev, opts.c1, opts.c2)
        if alpha is None:
            # Steepest-descent restart, then a plain backtracking rescue;
            # a handful of consecutive rescues means the search is stuck.
            H = np.eye(n)
            p = -g
            alpha, f_new, g_new = _line_search(obj, x, p, f, g, f_prev, opts.c1, opts.c2)
            if alpha is None:
                rescues += 1
                if rescues >= 4:
                    stagnated = gtol_strikes == 0
                    break
                alpha, f_new = _backtrack(obj, x, p, f, g, opts.c1)
                g_new = None
            if alpha is None:
                stagnated = gtol_strikes == 0
                break
        else:
            rescues = 0
        s = alpha * p
        x_new = x + s
        if g_new is None:
            g_new = obj.grad(x_new)
        g_new = np.asarray(g_new, dtype=float)
        y = g_new - g
        sy = s @ y
        if sy <= 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            skips += 1
            if skips >= CURVATURE_SKIP_RESET:
                H = np.eye(n)
                skips = 0
        else:
            skips = 0
            Hy = H @ y
            H += (
                np.outer(s, s) * ((sy + y @ Hy) / sy**2)
                - (np.outer(Hy, s) + np.outer(s, Hy)) / sy
            )
        f_prev, x, f, g = f, x_new, f_new, g_new
        iterations += 1
        if f < best_f:
            best_f, best_x, best_g = f, x.copy(), g
    if f <= best_f:
        best_f, best_x, best_g = f, x, g
    return best_x, best_f, iterations, float(np.max(np.abs(best_g))), stagnated


def minimize_loss(ctx: LossContext, theta0: ThetaVector,
                  options: MinimizeOptions | None = None) -> MinimizeResult:
    """Minimize the level loss from theta0; returns the best point seen.

    A start that already meets the level returns immediately with zero
    iterations. The final loss never exceeds the starting loss.
    """

    def fg(x):
        return loss_and_gradient(ctx, theta0.with_data(x))

    def f_only(x):
        return loss(ctx, theta0.with_data(x))

    x, f, iters, gnorm, stagnated = bfgs_minimize(
        fg, theta0.data, options, fun_only=f_only
    )
    return MinimizeResult(theta0.with_data(x), f, iters, gnorm, stagnated)


@dataclass
class IterationRecord:
    gamma: float
    n_samples: int
    loss: float
    opt_iters: int
    grad_norm: float
    seconds: float
    stagnated: bool = False


@dataclass
class ReductionReport:
    """Per-level records of one bisection run plus the final outcome."""

    iterations: list[IterationRecord] = field(default_factory=list)
    final_theta: ThetaVector | None = None
    final_gamma: float = np.inf
    final_hinf: float | None = None
    final_samples: SampleSet | None = None
    achieved_theta: ThetaVector | None = None
    achieved_samples: SampleSet | None = None
    selected_level: int = 0
    loop_seconds: float = 0.0
    growth_aborted: bool = False
    seed: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "iterations": [
                {
                    "gamma": rec.gamma,
                    "n_samples": rec.n_samples,
                    "loss": rec.loss,
                    "opt_iters": rec.opt_iters,
                    "grad_norm": rec.grad_norm,
                    "seconds": rec.seconds,
                    "stagnated": rec.stagnated,
                }
                for rec in self.iterations
            ],
            "final_gamma": self.final_gamma,
            "theta_len": 0 if self.final_theta is None else len(self.final_theta),
            "final_hinf": self.final_hinf,
            "growth_aborted": self.growth_aborted,
            "seed": self.seed,
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("gamma,n_samples,loss,opt_iters,seconds\n")
            for rec in self.iterations:
                fh.write(
                    f"{rec.gamma!r},{rec.n_samples},{rec.loss!r},"
                    f"{rec.opt_iters},{rec.seconds!r}\n"
                )


def reduce(fom, theta0: ThetaVector, samples0: SampleSet, gamma_max: float,
           tau_b: float, *, adapt: bool = True, max_bisect: int = 30,
           max_samples: int = 100_000, options: MinimizeOptions | None = None,
           hinf_band: tuple[float, float] | None = None, hinf_grid: int = 2000,
           fom_cache: dict | None = None, threads: int = 1,
           level_callback=None, seed: int | None = None):
    """Bisection over the level with per-level sample refinement.

    Each pass picks the bracket midpoint as the level, refines the sample
    set against the current model's error (unless ``adapt`` is off),
    minimizes the loss warm-started from the previous parameters, and
    tightens the bracket according to whether the level was met. The loop
    guard compares the current level against the bracket width scaled by
    ``tau_b`` (the initial ``gamma_max`` stands in on first entry) and a
    hard cap of ``max_bisect`` passes bounds the all-success trajectory.

    The returned parameters are the per-level iterate with the smallest
    estimated peak error: a warm-started optimization that failed its
    level may leave the last iterate worse than an earlier certified one,
    so each level's model is kept as a candidate (the bisection records
    themselves are untouched by this selection).

    Returns ``(theta_opt, report)``; on a sample-growth abort the report
    carries the completed levels and ``growth_aborted``.
    """
    bracket = GammaBracket(0.0, gamma_max, tau_b)
    theta = theta0
    samples = samples0
    cache = fom_cache if fom_cache is not None else {}
    report = ReductionReport(seed=seed)
    gamma_guard = gamma_max
    theta_achieved = None
    samples_achieved = None
    candidates = [theta0]
    tic_loop = time.perf_counter()
    while (
        len(report.iterations) < max_bisect
        and gamma_guard * tau_b < bracket.width
    ):
        gamma = bracket.midpoint
        tic = time.perf_counter()
        err = ErrorFunction(fom, assemble(theta), cache=cache, threads=threads)
        if adapt:
            try:
                samples = adapt_samples(err, samples, gamma, max_samples)
            except GrowthLimitError as exc:
                samples = exc.samples
                report.growth_aborted = True
                break
        ctx = LossContext.from_error_function(err, samples, gamma, theta.n)
        result = minimize_loss(ctx, theta, options)
        theta = result.theta
        success = result.fun == 0.0
        report.iterations.append(
            IterationRecord(
                gamma=gamma,
                n_samples=len(samples),
                loss=result.fun,
                opt_iters=result.iterations,
                grad_norm=result.grad_norm,
                seconds=time.perf_counter() - tic,
                stagnated=result.stagnated,
            )
        )
        bracket = bracket.after(gamma, success)
        gamma_guard = gamma
        candidates.append(theta)
        if success:
            theta_achieved = theta
            samples_achieved = samples
        if level_callback is not None:
            level_callback(len(report.iterations), gamma, samples, theta, result)
    # Loop time covers sampling and optimization only; candidate
    # selection below is shared evaluation machinery.
    report.loop_seconds = time.perf_counter() - tic_loop

    if isinstance(fom, Mapping):
        # A tabled full model can only be read at its own frequencies.
        def peak_estimate(candidate):
            err = ErrorFunction(fom, assemble(candidate), cache=cache,
                                threads=threads)
            return float(err.errors_at(samples.omegas).max())

        estimates = [peak_estimate(c) for c in candidates]
        selected = int(np.argmin(estimates))
        final_hinf = estimates[selected]
    else:
        # Rank candidates on the shared log grid (full-model responses are
        # cached, so this costs only small reduced solves), then refine
        # the winner's estimate.
        band = hinf_band or (float(samples.omegas[0]), float(samples.omegas[-1]))
        grid = np.logspace(np.log10(band[0]), np.log10(band[1]), hinf_grid)
        scores = []
        for candidate in candidates:
            err = ErrorFunction(fom, assemble(candidate), cache=cache,
                                threads=threads)
            scores.append(float(err.errors_at(grid).max()))
        selected = int(np.argmin(scores))
        err = ErrorFunction(fom, assemble(candidates[selected]), cache=cache,
                            threads=threads)
        final_hinf = float(hinf_estimate(err, band[0], band[1], hinf_grid)[0])
    theta = candidates[selected]
    report.selected_level = selected  # 0 = the initial model
    report.final_theta = theta
    report.final_gamma = bracket.gamma_max
    report.final_samples = samples
    report.achieved_theta = theta_achieved
    report.achieved_samples = samples_achieved
    report.final_hinf = final_hinf
    return theta, report
