"""Linear front speed of the infection."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from src.epidemic.models import FrontSeries
from src.utils.stats import LinearFit, linear_fit

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 0.2


@dataclass
class FrontFit:
    defined: bool
    slope: float = float("nan")
    r_squared: float = float("nan")
    n_points: int = 0
    fit: LinearFit | None = None

    @property
    def positive(self) -> bool:
        return self.defined and self.slope > 0

    def __str__(self) -> str:
        if not self.defined:
            return "front speed undefined"
        return f"front speed {self.slope:.4f} (R^2={self.r_squared:.3f}, n={self.n_points})"


def front_speed(series: FrontSeries, burn_in: float = DEFAULT_BURN_IN) -> FrontFit:
    """Least-squares slope of the front against time, after dropping a leading fraction.

    Samples after the first one with every particle infected are dropped,
    so a saturated torus does not flatten the fit. Undefined when the
    infection died out or too few samples remain.
    """
    if not 0 <= burn_in < 1:
        raise ValueError(f"burn_in must be in [0, 1), got {burn_in}")
    if series.extinct:
        return FrontFit(defined=False)
    t = np.asarray(series.times, dtype=float)
    front = np.asarray(series.front, dtype=float)
    if series.population:
        full = np.flatnonzero(np.asarray(series.infected_count) >= series.population)
        if full.size:
            t, front = t[: full[0] + 1], front[: full[0] + 1]
    if t.size < 2:
        return FrontFit(defined=False)
    keep = t >= t[0] + burn_in * (t[-1] - t[0])
    if keep.sum() < 2:
        return FrontFit(defined=False)
    fit = linear_fit(t[keep], front[keep])
    logger.debug("Front fit over %d samples: slope %.4f", fit.n_points, fit.slope)
    return FrontFit(
        defined=True,
        slope=fit.slope,
        r_squared=fit.r_squared,
        n_points=fit.n_points,
        fit=fit,
    )
