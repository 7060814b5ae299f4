import json

import numpy as np
import pytest

from phred.core import assemble
from phred.freq import ErrorFunction
from phred.objective import LossContext, loss, sample_errors
from phred.optimizer import (
    GammaBracket,
    MinimizeOptions,
    bfgs_minimize,
    minimize_loss,
    reduce,
)
from phred.sampling import SampleSet

from conftest import random_theta


class TestGammaBracket:
    def test_midpoint_and_width(self):
        b = GammaBracket(0.0, 0.5, 0.1)
        assert b.midpoint == 0.25
        assert b.width == 0.5

    def test_tightening(self):
        b = GammaBracket(0.0, 0.5, 0.1)
        assert b.after(0.25, success=True).gamma_max == 0.25
        assert b.after(0.25, success=False).gamma_min == 0.25

    def test_invalid(self):
        with pytest.raises(ValueError):
            GammaBracket(0.5, 0.5, 0.1)
        with pytest.raises(ValueError):
            GammaBracket(-0.1, 0.5, 0.1)
        with pytest.raises(ValueError):
            GammaBracket(0.0, 0.5, 0.0)


class TestBfgs:
    def test_quadratic_reaches_known_minimizer(self):
        rng = np.random.default_rng(70)
        n = 12
        M = rng.standard_normal((n, n))
        A = M @ M.T + np.eye(n)  # eigenvalues >= 1
        x_star = rng.standard_normal(n)

        def fg(x):
            d = x - x_star
            return 0.5 * float(d @ A @ d), A @ d

        x, f, iters, gnorm, stagnated = bfgs_minimize(fg, np.zeros(n))
        assert not stagnated
        assert np.max(np.abs(x - x_star)) <= 1e-8
        assert gnorm <= 1e-8

    def test_exact_zero_early_exit(self):
        calls = []

        def fg(x):
            calls.append(1)
            return 0.0, np.zeros(2)

        x, f, iters, _, _ = bfgs_minimize(fg, np.array([3.0, -1.0]))
        assert f == 0.0
        assert iters == 0
        assert np.array_equal(x, [3.0, -1.0])

    def test_stagnation_on_unminimizable_kink(self):
        def fg(x):
            return abs(x[0]) + 1.0, np.array([1.0 if x[0] >= 0 else -1.0])

        x, f, iters, _, stagnated = bfgs_minimize(fg, np.array([0.0]))
        assert stagnated
        assert f == 1.0

    def test_iteration_cap(self):
        def fg(x):
            return float(x[0]), np.array([1.0])  # unbounded below

        opts = MinimizeOptions(maxiter=5)
        x, f, iters, _, _ = bfgs_minimize(fg, np.array([10.0]), opts)
        assert iters == 5
        assert f < 10.0  # made progress, returned best seen


def forged_context(theta, omegas, errors, gamma):
    from phred.core import batch_transfer

    rom_resp = batch_transfer(assemble(theta), 1j * np.asarray(omegas))
    table = {}
    for w, resp, e in zip(omegas, rom_resp, errors):
        bump = np.zeros((theta.m, theta.m), dtype=complex)
        bump[0, 0] = e
        table[w] = resp + bump
    return LossContext(gamma, table, SampleSet(omegas), theta.n, theta.m)


class TestMinimizeLoss:
    def test_feasible_start_returns_unchanged(self):
        rng = np.random.default_rng(71)
        theta = random_theta(rng, 3, 2)
        ctx = forged_context(theta, [1.0, 2.0], [0.1, 0.2], 0.5)
        res = minimize_loss(ctx, theta)
        assert res.iterations == 0
        assert res.fun == 0.0
        assert np.array_equal(res.theta.data, theta.data)

    def test_reduces_loss_from_infeasible_start(self):
        rng = np.random.default_rng(72)
        theta = random_theta(rng, 2, 2)
        ctx = forged_context(theta, [0.5, 2.0, 8.0], [0.9, 1.3, 0.7], 0.25)
        start = loss(ctx, theta)
        res = minimize_loss(ctx, theta)
        assert res.fun <= start
        assert res.fun < start * 0.9  # actually made progress

    def test_benchmark_first_level_met(self, msd_fom, msd_fom_cache, msd_r8_init):
        _, points, theta0 = msd_r8_init
        err = ErrorFunction(msd_fom, assemble(theta0), cache=msd_fom_cache)
        decades = 10.0 ** np.arange(-8.0, 6.0)
        samples = SampleSet(np.concatenate([decades, points]))
        ctx = LossContext.from_error_function(err, samples, 0.25, 8)
        res = minimize_loss(ctx, theta0)
        assert res.fun == 0.0


class IdentityPair:
    """fom == rom(theta): the error is zero everywhere."""


class TestReduce:
    @staticmethod
    def _identity_setup(rng):
        theta0 = random_theta(rng, 2, 1)
        fom = assemble(theta0)
        s0 = SampleSet.decades(-2, 2)
        return fom, theta0, s0

    def test_all_success_sequence_halves(self):
        rng = np.random.default_rng(73)
        fom, theta0, s0 = self._identity_setup(rng)
        theta, report = reduce(fom, theta0, s0, 0.5, 0.1, max_bisect=8)
        gammas = [rec.gamma for rec in report.iterations]
        assert gammas == [0.5 / 2**k for k in range(1, 9)]
        assert all(rec.loss == 0.0 for rec in report.iterations)
        assert report.final_gamma == 0.5 / 2**8
        assert np.array_equal(theta.data, theta0.data)

    def test_failure_moves_midpoint_up(self):
        rng = np.random.default_rng(74)
        theta0 = random_theta(rng, 1, 1)
        fom = {w: np.array([[100.0 + 0j]]) for w in SampleSet.decades(-1, 1)}
        s0 = SampleSet.decades(-1, 1)
        # maxiter=0 forces every optimization to fail at its start value.
        theta, report = reduce(
            fom, theta0, s0, 0.5, 0.1, adapt=False, max_bisect=3,
            options=MinimizeOptions(maxiter=0),
        )
        gammas = [rec.gamma for rec in report.iterations]
        assert gammas[0] == 0.25
        assert gammas[1] == 0.375  # midpoint of [0.25, 0.5]
        assert gammas[2] == 0.4375

    def test_guard_blocks_first_entry(self):
        rng = np.random.default_rng(75)
        fom, theta0, s0 = self._identity_setup(rng)
        theta, report = reduce(fom, theta0, s0, 0.5, 2.0)
        assert report.iterations == []
        assert report.final_gamma == 0.5
        assert np.array_equal(theta.data, theta0.data)

    def test_bracket_never_widens_and_samples_never_shrink(self, msd_fom,
                                                           msd_fom_cache):
        from phred.greedy import greedy_init, theta_from_init

        rom0, points = greedy_init(msd_fom, 4, fom_cache=msd_fom_cache)
        theta0 = theta_from_init(rom0)
        s0 = SampleSet(np.concatenate([10.0 ** np.arange(-8.0, 6.0), points]))
        _, report = reduce(msd_fom, theta0, s0, 0.5, 0.1, max_bisect=10,
                           fom_cache=msd_fom_cache)
        lo, hi = 0.0, 0.5
        prev_n = 0
        for rec in report.iterations:
            assert rec.gamma == 0.5 * (lo + hi)
            if rec.loss > 0.0:
                lo = rec.gamma
            else:
                hi = rec.gamma
            assert rec.n_samples >= prev_n
            prev_n = rec.n_samples
        assert report.final_gamma == hi
        # The model that achieved the final level meets it at every sample
        # that certified it, and the returned model's estimated peak error
        # is the best among the per-level candidates.
        err = ErrorFunction(msd_fom, assemble(report.achieved_theta),
                            cache=msd_fom_cache)
        ctx = LossContext.from_error_function(
            err, report.achieved_samples, report.final_gamma,
            report.achieved_theta.n,
        )
        assert sample_errors(ctx, report.achieved_theta).max() <= report.final_gamma
        err_sel = ErrorFunction(msd_fom, assemble(report.final_theta),
                                cache=msd_fom_cache)
        from phred.freq import hinf_estimate

        sel_peak = hinf_estimate(err_sel, 1e-8, 1e5, 500)[0]
        ach_peak = hinf_estimate(err, 1e-8, 1e5, 500)[0]
        assert sel_peak <= ach_peak * (1 + 1e-9)

    def test_growth_cap_abort_keeps_partial_report(self):
        rng = np.random.default_rng(76)
        theta0 = random_theta(rng, 2, 2)
        from phred.bench import MSDConfig, msd_chain

        fom = msd_chain(MSDConfig(n_masses=5))
        s0 = SampleSet.decades(-8, 5)
        theta, report = reduce(
            fom, theta0, s0, 2e-6, 0.1, max_samples=30, max_bisect=5,
        )
        assert report.growth_aborted
        assert len(report.final_samples) <= 30

    def test_deterministic_reruns(self):
        rng = np.random.default_rng(77)
        from phred.bench import MSDConfig, msd_chain
        from phred.greedy import greedy_init, theta_from_init

        fom = msd_chain(MSDConfig(n_masses=4))
        rom0, points = greedy_init(fom, 2, n_grid=200)
        theta0 = theta_from_init(rom0)
        s0 = SampleSet(np.concatenate([10.0 ** np.arange(-4.0, 4.0), points]))
        runs = []
        for _ in range(2):
            theta, report = reduce(fom, theta0, s0, 0.5, 0.1, max_bisect=6)
            runs.append(
                (
                    tuple(theta.data.tolist()),
                    tuple(
                        (r.gamma, r.n_samples, r.loss, r.opt_iters)
                        for r in report.iterations
                    ),
                    report.final_gamma,
                )
            )
        assert runs[0] == runs[1]


class TestReportSerialization:
    def test_json_and_csv_schema(self, tmp_path):
        rng = np.random.default_rng(78)
        theta0 = random_theta(rng, 2, 1)
        fom = assemble(theta0)
        _, report = reduce(fom, theta0, SampleSet.decades(-1, 1), 0.5, 0.1,
                           max_bisect=3)
        report.save_json(tmp_path / "report.json")
        report.save_csv(tmp_path / "report.csv")
        doc = json.loads((tmp_path / "report.json").read_text())
        assert {"iterations", "final_gamma", "theta_len"} <= doc.keys()
        assert doc["theta_len"] == len(theta0)
        assert len(doc["iterations"]) == 3
        for rec in doc["iterations"]:
            assert {"gamma", "n_samples", "loss", "opt_iters", "seconds"} <= rec.keys()
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "gamma,n_samples,loss,opt_iters,seconds"
        assert len(lines) == 4
