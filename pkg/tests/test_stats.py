"""Tests for the statistical helpers."""

from __future__ import annotations

import numpy as np
import pytest

from src.utils.stats import (
    categorical_test,
    exponential_ks,
    linear_fit,
    poisson_dispersion_test,
    wilson_interval,
)


class TestWilsonInterval:
    def test_known_interval(self):
        est = wilson_interval(3, 10)
        assert est.value == pytest.approx(0.3)
        assert est.low == pytest.approx(0.1078, abs=1e-3)
        assert est.high == pytest.approx(0.6032, abs=1e-3)

    def test_zero_successes(self):
        est = wilson_interval(0, 10)
        assert est.low == 0.0
        assert est.high == pytest.approx(0.2775, abs=1e-3)

    def test_wider_at_higher_confidence(self):
        narrow = wilson_interval(40, 100, confidence=0.9)
        wide = wilson_interval(40, 100, confidence=0.99)
        assert wide.low < narrow.low < 0.4 < narrow.high < wide.high

    def test_no_trials(self):
        est = wilson_interval(0, 0)
        assert (est.low, est.high) == (0.0, 1.0)
        assert np.isnan(est.value)


class TestGoodnessOfFit:
    def test_exponential_samples_pass(self):
        samples = np.random.default_rng(0).exponential(size=5000)
        assert exponential_ks(samples) > 0.01

    def test_wrong_rate_fails(self):
        samples = np.random.default_rng(0).exponential(scale=2.0, size=5000)
        assert exponential_ks(samples) < 1e-6
        assert exponential_ks(samples, rate=0.5) > 0.01

    def test_categorical_exact_match(self):
        p = categorical_test(np.array([100, 200, 300]), np.array([1, 2, 3]))
        assert p == pytest.approx(1.0)

    def test_categorical_mass_on_impossible_category(self):
        assert categorical_test(np.array([5, 1]), np.array([1.0, 0.0])) == 0.0

    def test_poisson_counts(self):
        means = np.full(400, 3.0)
        counts = np.random.default_rng(1).poisson(means)
        assert poisson_dispersion_test(counts, means) > 0.01
        assert poisson_dispersion_test(counts + 3, means) < 1e-6


class TestLinearFit:
    def test_exact_line(self):
        fit = linear_fit(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 5.0]))
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.predict(3.0) == pytest.approx(7.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 2"):
            linear_fit(np.array([1.0]), np.array([1.0]))
