"""Monte Carlo exit-time tails and their Gaussian-type fit."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.lattice.field import ConductanceField
from src.utils.stats import LinearFit, Proportion, linear_fit, wilson_interval
from src.walk.ensemble import advance

logger = logging.getLogger(__name__)


@dataclass
class ExitTailPoint:
    r: int
    t: float
    estimate: Proportion

    @property
    def frequency(self) -> float:
        return self.estimate.value


@dataclass
class ExitTailFit:
    """Fit of log P(tau(x, r) < t) = log c3 - c4 r^2 / t over a grid."""

    points: list[ExitTailPoint] = field(default_factory=list)
    fit: LinearFit | None = None

    @property
    def c3(self) -> float:
        return math.exp(self.fit.intercept) if self.fit else float("nan")

    @property
    def c4(self) -> float:
        return -self.fit.slope if self.fit else float("nan")

    def bound(self, r: float, t: float) -> float:
        return self.c3 * math.exp(-self.c4 * r * r / t)

    def __str__(self) -> str:
        if self.fit is None:
            return f"exit tail: {len(self.points)} points, no fit"
        return (
            f"exit tail: c3={self.c3:.4g}, c4={self.c4:.4g}, "
            f"R^2={self.fit.r_squared:.3f} over {self.fit.n_points} points"
        )


def _exit_frequencies(
    field: ConductanceField,
    x: int,
    radii: list[int],
    t: float,
    n: int,
    rng: np.random.Generator,
) -> list[ExitTailPoint]:
    batch = advance(field, np.full(n, x), t, rng)
    dist = field.distances(x, limit=max(radii))
    points = []
    for r in radii:
        hits = int(np.sum(np.isfinite(batch.first_hit(dist > r))))
        points.append(ExitTailPoint(r=r, t=t, estimate=wilson_interval(hits, n)))
    return points


def empirical_exit_tail(
    field: ConductanceField, x: int, r: int, t: float, n: int, seed: int
) -> ExitTailPoint:
    """Fraction of n independent walks from x that leave B(x, r) before time t."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return _exit_frequencies(field, x, [r], t, n, np.random.default_rng(seed))[0]


def fit_exit_tail(
    field: ConductanceField,
    x: int,
    radii: list[int],
    times: list[float],
    n: int,
    seed: int,
) -> ExitTailFit:
    """Estimate exit frequencies on an (r, t) grid and fit (c3, c4).

    Grid points with zero observed exits carry no information on the log
    scale and are left out of the regression.
    """
    streams = np.random.SeedSequence(seed).spawn(len(times))
    result = ExitTailFit()
    for t, ss in zip(times, streams):
        result.points.extend(
            _exit_frequencies(field, x, list(radii), t, n, np.random.default_rng(ss))
        )
    usable = [p for p in result.points if p.estimate.successes > 0]
    if len(usable) >= 2:
        result.fit = linear_fit(
            np.array([p.r**2 / p.t for p in usable]),
            np.log([p.frequency for p in usable]),
        )
    logger.info("%s", result)
    return result
