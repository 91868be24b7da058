import numpy as np
import pytest

from eptr.baselines import (
    BaselineConfig,
    _means_from_noisy,
    noisy_gd_linreg,
    noisy_ratio_kernel,
    noisy_stats_bayes,
)
from eptr.bayes import fit_bayes
from eptr.kernelreg import KernelRegConfig, gaussian_kernel, nw_estimate
from eptr.linreg import LinRegConfig, ols_fit
from eptr.mechanisms import PrivacyBudget, substream
from eptr.sim import gen_bayes, gen_kernel, gen_linreg, linreg_coefficients

LOOSE = PrivacyBudget(1e6, 0.5)  # vanishing-noise regime
TIGHT = PrivacyBudget(1.0, 0.01)


class TestNoisyStatsBayes:
    def test_vanishing_noise_matches_nonprivate(self):
        mu = np.array([0.6, 0.4])
        data = gen_bayes(500, 2, 3, mu, np.zeros((2, 3)), substream(1, 0))
        params = noisy_stats_bayes(data, 10.0, LOOSE, substream(1, 1), c0=0.01)
        mu_hat, m_hat = fit_bayes(data)
        assert np.all(np.abs(params.mu - mu_hat) < 1e-3)
        assert np.all(np.abs(params.m - m_hat) < 1e-3)

    def test_nonpositive_count_floor_rule(self):
        means = _means_from_noisy(np.array([[4.0, 2.0], [3.0, 3.0]]), np.array([-0.5, 0.5]))
        assert np.array_equal(means[0], [0.0, 0.0])  # nonpositive count
        assert np.array_equal(means[1], [3.0, 3.0])  # divisor floored at one

    def test_output_is_probability_vector(self):
        mu = np.array([0.7, 0.2, 0.1])
        data = gen_bayes(200, 3, 2, mu, np.zeros((3, 2)), substream(2, 0))
        for rep in range(20):
            params = noisy_stats_bayes(data, 4.0, TIGHT, substream(2, rep + 1), c0=0.05)
            assert abs(params.mu.sum() - 1.0) <= 1e-12
            assert np.all(params.mu > 0)
            assert np.all(np.isfinite(params.m))

    def test_deterministic(self):
        data = gen_bayes(100, 2, 2, np.array([0.5, 0.5]), np.zeros((2, 2)), substream(3, 0))
        a = noisy_stats_bayes(data, 4.0, TIGHT, substream(3, 1))
        b = noisy_stats_bayes(data, 4.0, TIGHT, substream(3, 1))
        assert np.array_equal(a.mu, b.mu) and np.array_equal(a.m, b.m)


class TestNoisyGdLinreg:
    def test_zero_steps_equivalent(self):
        data = gen_linreg(100, 3, np.zeros(3), 1.0, substream(4, 0))
        config = LinRegConfig(2.0, 1.0, 0.25, TIGHT)
        theta = noisy_gd_linreg(data, config, 1, 0.0, TIGHT, substream(4, 1))
        assert np.array_equal(theta, np.zeros(3))

    def test_vanishing_noise_converges_to_projected_ols(self):
        theta_true = linreg_coefficients(3) * 0.8
        data = gen_linreg(400, 3, theta_true, 0.3, substream(5, 0))
        config = LinRegConfig(10.0, 1.0, 0.25, LOOSE)
        theta = noisy_gd_linreg(data, config, 300, 0.5 / data.n * 100, LOOSE, substream(5, 1))
        target = ols_fit(data, config.r_theta)
        assert np.linalg.norm(theta - target) <= 1e-2

    def test_iterates_stay_in_ball(self):
        data = gen_linreg(50, 4, np.zeros(4), 1.0, substream(6, 0))
        config = LinRegConfig(1.0, 0.7, 0.25, TIGHT)
        for rep in range(10):
            theta = noisy_gd_linreg(data, config, 15, 0.2, TIGHT, substream(6, rep + 1))
            assert np.linalg.norm(theta) <= 0.7 + 1e-12
            assert np.all(np.isfinite(theta))

    def test_rejects_bad_steps(self):
        data = gen_linreg(10, 2, np.zeros(2), 1.0, substream(7, 0))
        config = LinRegConfig(1.0, 1.0, 0.25, TIGHT)
        with pytest.raises(ValueError):
            noisy_gd_linreg(data, config, 0, 0.1, TIGHT, substream(7, 1))


class TestNoisyRatioKernel:
    def test_vanishing_noise_matches_nonprivate(self):
        data = gen_kernel(2000, "uniform", 0.2, substream(8, 0))
        sigma = 0.05
        k = gaussian_kernel(sigma, 1)
        config = KernelRegConfig(np.array([0.5]), 2.0, 0.1, sigma, LOOSE)
        noisy = noisy_ratio_kernel(data, config, k, LOOSE, substream(8, 1))
        exact = nw_estimate(np.array([0.5]), data, k, 2.0)
        assert abs(noisy - exact) <= 1e-6

    def test_denominator_floor_keeps_output_bounded(self):
        data = gen_kernel(200, "uniform", 0.2, substream(9, 0))
        far = KernelRegConfig(np.array([50.0]), 2.0, 0.1, 0.05, TIGHT)
        k = gaussian_kernel(0.05, 1)
        for rep in range(20):
            value = noisy_ratio_kernel(data, far, k, TIGHT, substream(9, rep + 1))
            assert abs(value) <= 2.0

    def test_deterministic(self):
        data = gen_kernel(300, "uniform", 0.2, substream(10, 0))
        k = gaussian_kernel(0.05, 1)
        config = KernelRegConfig(np.array([0.5]), 2.0, 0.1, 0.05, TIGHT)
        a = noisy_ratio_kernel(data, config, k, TIGHT, substream(10, 1))
        b = noisy_ratio_kernel(data, config, k, TIGHT, substream(10, 1))
        assert a == b


class TestBaselineConfig:
    def test_split_must_sum_to_one(self):
        with pytest.raises(ValueError):
            BaselineConfig(TIGHT, split=(0.7, 0.7))
        with pytest.raises(ValueError):
            BaselineConfig(TIGHT, t_steps=0)
        assert BaselineConfig(TIGHT).split == (0.5, 0.5)
