"""Tests for the recompute, horizon and input distributions."""

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from src.errors import GpdDomainError
from src.policy.distributions import (
    bernoulli_log_prob,
    bernoulli_sample,
    bernoulli_score,
    gaussian_log_prob,
    gaussian_score,
    gpd_log_prob,
    gpd_log_prob_strict,
    gpd_moments,
    gpd_sample,
    gpd_score,
    logit_for_probability,
    mixture_log_prob,
)


def derivative(fn, x: float, eps: float = 1e-6) -> float:
    return (fn(x + eps) - fn(x - eps)) / (2 * eps)


class TestBernoulli:
    def test_log_prob(self):
        assert bernoulli_log_prob(1, 0.3) == pytest.approx(np.log(expit(0.3)))
        assert bernoulli_log_prob(0, 0.3) == pytest.approx(np.log(1 - expit(0.3)))

    def test_extreme_logits_stay_finite(self):
        assert np.isfinite(bernoulli_log_prob(0, 800.0))
        assert np.isfinite(bernoulli_log_prob(1, -800.0))

    @pytest.mark.parametrize("c", [0, 1])
    def test_score(self, c):
        fd = derivative(lambda z: float(bernoulli_log_prob(c, z)), 0.7)
        assert float(bernoulli_score(c, 0.7)) == pytest.approx(fd, abs=1e-8)

    def test_logit_for_probability(self):
        assert expit(logit_for_probability(0.9)) == pytest.approx(0.9)
        with pytest.raises(ValueError):
            logit_for_probability(1.0)

    def test_sample_frequency(self):
        rng = np.random.default_rng(0)
        draws = [bernoulli_sample(logit_for_probability(0.9), rng) for _ in range(20_000)]
        assert np.mean(draws) == pytest.approx(0.9, abs=0.01)


class TestGeneralizedPoisson:
    @pytest.mark.parametrize("mu", [0.5, 3.0, 31.0])
    def test_reduces_to_poisson(self, mu):
        n = np.arange(0, 80)
        np.testing.assert_allclose(gpd_log_prob(n, mu, 0.0), stats.poisson.logpmf(n, mu), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("mu", [1.0, 10.0, 20.0, 40.0])
    @pytest.mark.parametrize("alpha", [-0.01, 0.0, 0.02, 0.1])
    def test_mass(self, mu, alpha):
        n = np.arange(0, 501)
        assert np.exp(gpd_log_prob(n, mu, alpha)).sum() >= 0.999

    def test_outside_domain(self):
        assert gpd_log_prob(60, 20.0, -0.02) == -np.inf
        assert gpd_log_prob(3, 0.0, 0.0) == -np.inf
        assert np.ndim(gpd_log_prob(3, 2.0, 0.0)) == 0
        with pytest.raises(GpdDomainError):
            gpd_log_prob_strict(60, 20.0, -0.02)

    @pytest.mark.parametrize("n", [0, 7, 25])
    def test_score(self, n):
        mu, alpha = 12.0, 0.03
        d_mu, d_alpha = gpd_score(n, mu, alpha)
        assert float(d_mu) == pytest.approx(derivative(lambda m: float(gpd_log_prob(n, m, alpha)), mu), abs=1e-7)
        assert float(d_alpha) == pytest.approx(derivative(lambda a: float(gpd_log_prob(n, mu, a)), alpha), abs=1e-6)

    def test_score_zero_outside_domain(self):
        d_mu, d_alpha = gpd_score(60, 20.0, -0.02)
        assert d_mu == 0.0 and d_alpha == 0.0

    @pytest.mark.parametrize("alpha", [-0.01, 0.0, 0.02])
    def test_sampler_moments(self, alpha):
        mu = 20.0
        draws = gpd_sample(mu, alpha, np.random.default_rng(1), size=200_000)
        mean, var = gpd_moments(mu, alpha)
        assert draws.mean() == pytest.approx(mean, rel=0.01)
        assert draws.var() == pytest.approx(var, rel=0.05)

    def test_sampler_bounds(self):
        draws = gpd_sample(2.0, 0.5, np.random.default_rng(2), n_min=1, n_max=40, size=5000)
        assert draws.min() >= 1 and draws.max() <= 40
        assert isinstance(gpd_sample(10.0, 0.0, np.random.default_rng(3), 1, 40), int)


class TestGaussian:
    def test_matches_scipy(self):
        assert gaussian_log_prob(0.4, -0.1, np.log(0.5)) == pytest.approx(stats.norm.logpdf(0.4, -0.1, 0.5))

    def test_score(self):
        u, mean, log_std = 0.4, -0.1, np.log(0.5)
        d_mean, d_log_std = gaussian_score(u, mean, log_std)
        assert float(d_mean) == pytest.approx(derivative(lambda m: float(gaussian_log_prob(u, m, log_std)), mean))
        assert float(d_log_std) == pytest.approx(derivative(lambda s: float(gaussian_log_prob(u, mean, s)), log_std))


class TestMixture:
    ARGS = dict(logit=1.2, mu=15.0, alpha=0.01, mean_M=0.3, mean_ML=-0.2, log_std_M=-0.5, log_std_ML=-1.0)

    def test_recompute_branch(self):
        terms = mixture_log_prob(1, 12, 0.5, **self.ARGS)
        expected = (bernoulli_log_prob(1, 1.2) + gpd_log_prob(12, 15.0, 0.01)
                    + gaussian_log_prob(0.5, 0.3, -0.5))
        assert float(terms.total) == pytest.approx(float(expected), abs=1e-12)

    def test_lqr_branch(self):
        terms = mixture_log_prob(0, 12, 0.5, **self.ARGS)
        assert float(terms.control) == pytest.approx(float(gaussian_log_prob(0.5, -0.2, -1.0)))
        assert float(terms.horizon) == pytest.approx(float(gpd_log_prob(12, 15.0, 0.01)))
        assert float(terms.total) == pytest.approx(float(terms.recompute + terms.horizon + terms.control))

    def test_deterministic_components_drop_out(self):
        terms = mixture_log_prob(np.array([1, 0]), np.array([12, 12]), np.array([0.5, 0.5]),
                                 stochastic=(True, False, False, False), **self.ARGS)
        np.testing.assert_array_equal(terms.horizon, [0.0, 0.0])
        np.testing.assert_array_equal(terms.control, [0.0, 0.0])
        np.testing.assert_allclose(terms.total, bernoulli_log_prob(np.array([1, 0]), 1.2))
