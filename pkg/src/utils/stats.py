"""Small statistical helpers used by experiments and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Proportion:
    """Empirical frequency with a Wilson score interval."""

    successes: int
    trials: int
    low: float
    high: float

    @property
    def value(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    def __str__(self) -> str:
        return f"{self.value:.4f} [{self.low:.4f}, {self.high:.4f}] ({self.successes}/{self.trials})"


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Proportion:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return Proportion(successes=0, trials=0, low=0.0, high=1.0)
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    return Proportion(
        successes=int(successes),
        trials=int(trials),
        low=max(0.0, float(ci.low)),
        high=min(1.0, float(ci.high)),
    )


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def predict(self, x: np.ndarray | float) -> np.ndarray | float:
        return self.intercept + self.slope * np.asarray(x)


def linear_fit(x: np.ndarray, y: np.ndarray) -> LinearFit:
    """Least-squares line through (x, y) via ``scipy.stats.linregress``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError(f"Need at least 2 points for a fit, got {x.size}")
    if np.ptp(y) == 0.0:
        # linregress returns nan for r when y is flat
        slope = 0.0 if np.ptp(x) > 0 else float("nan")
        return LinearFit(slope=slope, intercept=float(y[0]), r_squared=1.0, n_points=x.size)
    res = stats.linregress(x, y)
    return LinearFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue**2),
        n_points=int(x.size),
    )


def poisson_dispersion_test(counts: np.ndarray, means: np.ndarray) -> float:
    """p-value of a chi-square goodness-of-fit of counts to Poisson(means).

    Sites are pooled into groups of expected mass at least 5 so the
    chi-square approximation holds; the statistic compares per-group totals,
    which are Poisson with the summed mean.
    """
    counts = np.asarray(counts, dtype=float)
    means = np.asarray(means, dtype=float)
    keep = means > 0
    counts, means = counts[keep], means[keep]
    if counts.size == 0:
        return 1.0
    groups = np.floor(np.cumsum(means) / 5.0).astype(int)
    obs = np.bincount(groups, weights=counts)
    exp = np.bincount(groups, weights=means)
    if exp.size > 1 and exp[-1] < 5.0:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    statistic = float(np.sum((obs - exp) ** 2 / exp))
    return float(stats.chi2.sf(statistic, df=max(exp.size, 1)))


def categorical_test(observed: np.ndarray, probabilities: np.ndarray) -> float:
    """Chi-square p-value of observed category counts against probabilities."""
    observed = np.asarray(observed, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    keep = probabilities > 0
    if np.any(observed[~keep] > 0):
        return 0.0
    expected = probabilities[keep] / probabilities[keep].sum() * observed.sum()
    return float(stats.chisquare(observed[keep], expected).pvalue)


def exponential_ks(samples: np.ndarray, rate: float = 1.0) -> float:
    """Kolmogorov-Smirnov p-value against exponential(rate)."""
    return float(stats.kstest(np.asarray(samples), "expon", args=(0, 1.0 / rate)).pvalue)
