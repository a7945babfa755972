"""HSIC and the regression-based direction finders.

The 200-seed accuracy checks reuse cached reports from ``amortcd.experiments``
(also consumed by the acceptance suite), so they are only slow on a cold cache.
"""

import numpy as np
import pytest

from amortcd import baselines as bl
from amortcd.errors import ContractError, DegenerateColumnError
from amortcd.evaluation import shd
from amortcd.experiments import baseline_report
from amortcd.identifiability import sample_invertible_pair
from amortcd.noise import make_rng
from amortcd.scm import CorpusConfig, Dataset, GraphLabel, generate_corpus


def permutation_quantile(u, v, q, shuffles, rng):
    null = [bl.hsic_statistic(u, rng.permutation(v)) for _ in range(shuffles)]
    return np.quantile(null, q)


def accuracy(report):
    return 1.0 - report.mean_shd


class TestHsic:
    def test_self_dependence_beats_permutations(self):
        rng = make_rng(0)
        u = rng.standard_normal(100)
        assert bl.hsic_statistic(u, u) > permutation_quantile(u, u, 0.99, 500, rng)

    def test_independent_pairs_calibrated(self):
        below = 0
        for s in range(50):
            rng = make_rng(1, s)
            u, v = rng.standard_normal(200), rng.standard_normal(200)
            below += bl.hsic_statistic(u, v) < permutation_quantile(u, v, 0.95, 100, rng)
        assert below / 50 >= 0.90

    def test_self_beats_independent(self):
        wins = 0
        for s in range(100):
            rng = make_rng(2, s)
            u, v = rng.standard_normal(200), rng.standard_normal(200)
            wins += bl.hsic_statistic(u, u) > bl.hsic_statistic(u, v)
        assert wins >= 99

    def test_nonnegative_and_symmetric(self):
        rng = make_rng(3)
        u, v = rng.standard_normal(60), rng.uniform(size=60)
        assert bl.hsic_statistic(u, v) >= 0
        assert bl.hsic_statistic(u, v) == pytest.approx(bl.hsic_statistic(v, u), rel=1e-12)

    def test_guards(self):
        with pytest.raises(DegenerateColumnError):
            bl.hsic_statistic(np.ones(50), np.arange(50.0))
        with pytest.raises(ContractError):
            bl.hsic_statistic(np.arange(10.0), np.arange(10.0))
        with pytest.raises(ContractError):
            bl.hsic_statistic(np.arange(30.0), np.arange(40.0))

    def test_median_bandwidth(self):
        assert bl.median_bandwidth(np.array([0.0, 1.0, 3.0])) == 2.0


class TestRegressions:
    def test_ols_residual_orthogonal(self):
        rng = make_rng(5)
        x = rng.standard_normal(300)
        r = bl.ols_residual(x, 2 * x + 1 + rng.standard_normal(300))
        assert abs(r.mean()) < 1e-10 and abs(np.dot(r, x)) < 1e-8

    def test_krr_fits_smooth_function(self):
        x = np.linspace(-2, 2, 200)
        r = bl.krr_residual(x, np.sin(2 * x))
        assert np.std(r) < 0.05

    def test_nystrom_path(self):
        rng = make_rng(6)
        x = rng.uniform(-2, 2, 1000)
        y = np.tanh(x) + 0.1 * rng.standard_normal(1000)
        assert abs(np.std(bl.krr_residual(x, y)) - 0.1) < 0.02


class TestDirections:
    @pytest.mark.parametrize("method", [bl.linear_direction, bl.anm_direction])
    def test_column_swap_antisymmetry(self, method):
        d = generate_corpus(CorpusConfig.single("nonlinear-uniform", 1, 400), 3).datasets[0]
        swapped = Dataset(d.values[:, ::-1].copy(), d.label)
        a, b = method(d), method(swapped)
        assert a.graph is not b.graph
        assert a.score_xy == pytest.approx(b.score_yx, abs=1e-9)
        assert a.score_yx == pytest.approx(b.score_xy, abs=1e-9)

    def test_never_empty(self):
        d = generate_corpus(CorpusConfig.single("empty-gaussian", 1, 100), 0).datasets[0]
        assert bl.linear_direction(d).graph in (GraphLabel.X_TO_Y, GraphLabel.Y_TO_X)

    def test_too_few_samples(self):
        with pytest.raises(ContractError):
            bl.linear_direction(np.zeros((49, 2)))

    def test_tie_flag(self):
        d = np.column_stack([np.arange(60.0), np.arange(60.0)])
        dec = bl.linear_direction(d)
        assert dec.tie and dec.graph is GraphLabel.X_TO_Y

    def test_invertible_forward_recovered(self):
        hits = sum(
            bl.linear_direction(sample_invertible_pair("forward", 1500, make_rng(40, s))).graph is GraphLabel.X_TO_Y
            for s in range(200)
        )
        assert hits / 200 >= 0.85

    def test_lingam_uniform(self):
        assert accuracy(baseline_report("linear", "linear-uniform", 1500, 200)) >= 0.90

    def test_linear_on_linear_gaussian(self):
        assert abs(accuracy(baseline_report("linear", "linear-gaussian", 1500, 200)) - 0.5) <= 0.10

    @pytest.mark.slow
    def test_anm_on_nonlinear_gaussian(self):
        assert accuracy(baseline_report("anm", "nonlinear-gaussian", 1500, 200)) >= 0.85

    @pytest.mark.slow
    def test_anm_on_linear_gaussian(self):
        assert abs(accuracy(baseline_report("anm", "linear-gaussian", 1500, 200)) - 0.5) <= 0.10


class TestRandom:
    def test_fair_coin(self):
        rng = make_rng(9)
        draws = [bl.random_direction(rng) for _ in range(10_000)]
        assert abs(draws.count(GraphLabel.X_TO_Y) / 1e4 - 0.5) <= 0.015

    def test_expected_shd(self):
        # Each single-edge truth is matched with probability 1/2 and reversed otherwise.
        for truth in (GraphLabel.X_TO_Y, GraphLabel.Y_TO_X):
            assert 0.5 * shd(GraphLabel.X_TO_Y, truth) + 0.5 * shd(GraphLabel.Y_TO_X, truth) == 0.5

    def test_seeded(self):
        a = [bl.random_direction(make_rng(3, i)) for i in range(20)]
        assert a == [bl.random_direction(make_rng(3, i)) for i in range(20)]
