"""Fitting Gaussian upper and lower bounds to exact heat kernels."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from src.lattice.field import ConductanceField
from src.spectral.heat_kernel import DEFAULT_TOL, heat_kernel_series
from src.utils.stats import LinearFit, linear_fit

logger = logging.getLogger(__name__)


@dataclass
class GaussianFit:
    """q_t(x,y) <= c1 t^{-d/2} e^{-c2 z} and q_t(x,y) >= c3 t^{-d/2} e^{-c4 z}, z = |x-y|^2/t.

    c2 and c4 are regression slopes; c1 (c3) is then the smallest (largest)
    prefactor making the bound hold on every grid point in its window.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    upper_fit: LinearFit
    lower_fit: LinearFit
    n_upper: int
    n_lower: int
    upper_violations: int = 0
    lower_violations: int = 0

    @property
    def r_squared(self) -> float:
        return min(self.upper_fit.r_squared, self.lower_fit.r_squared)

    def __str__(self) -> str:
        return (
            f"upper: c1={self.c1:.4g} c2={self.c2:.4g} ({self.n_upper} pts, "
            f"{self.upper_violations} violations); lower: c3={self.c3:.4g} c4={self.c4:.4g} "
            f"({self.n_lower} pts, {self.lower_violations} violations); R^2={self.r_squared:.4f}"
        )


@dataclass
class _Samples:
    log_scaled: np.ndarray
    z: np.ndarray
    upper: np.ndarray
    lower: np.ndarray


def _collect(
    field: ConductanceField,
    source: int,
    times: list[float],
    radii: list[int],
    tol: float,
) -> _Samples:
    d = field.box.d
    graph = field.distances(source, limit=max(radii))
    coords = field.box.coords(np.arange(field.box.n_vertices))
    euclid2 = np.sum(field.box.delta(coords[source], coords) ** 2, axis=1).astype(float)
    picked = np.flatnonzero(np.isin(graph, radii))
    tables = heat_kernel_series(field, times, [source], tol)

    log_scaled, z, upper, lower = [], [], [], []
    for table in tables:
        t = table.t
        q = table.values[0, picked]
        ok = q > 0
        D = graph[picked][ok]
        log_scaled.append(np.log(q[ok] * t ** (d / 2)))
        z.append(euclid2[picked][ok] / t)
        upper.append(D <= t)
        lower.append(D**1.5 <= t)
    return _Samples(
        log_scaled=np.concatenate(log_scaled),
        z=np.concatenate(z),
        upper=np.concatenate(upper),
        lower=np.concatenate(lower),
    )


def gaussian_bound_fit(
    field: ConductanceField,
    times: list[float],
    radii: list[int],
    source: int | None = None,
    tol: float = DEFAULT_TOL,
) -> GaussianFit:
    """Fit both Gaussian bounds on the (t, r) grid, graph distance r in ``radii``.

    The exponent variable uses the Euclidean distance on the torus-wrapped
    coordinates; the validity windows use graph distance.
    """
    source = field.box.origin if source is None else source
    s = _collect(field, source, list(times), list(radii), tol)
    if s.upper.sum() < 2 or s.lower.sum() < 2:
        raise ValueError("Grid has fewer than 2 points inside a validity window")

    up = linear_fit(s.z[s.upper], s.log_scaled[s.upper])
    lo = linear_fit(s.z[s.lower], s.log_scaled[s.lower])
    c2, c4 = max(-up.slope, 0.0), max(-lo.slope, 0.0)
    c1 = float(np.exp(np.max(s.log_scaled[s.upper] + c2 * s.z[s.upper])))
    c3 = float(np.exp(np.min(s.log_scaled[s.lower] + c4 * s.z[s.lower])))

    slack = 1e-12
    upper_bound = np.log(c1) - c2 * s.z[s.upper]
    lower_bound = np.log(c3) - c4 * s.z[s.lower]
    fit = GaussianFit(
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        upper_fit=up,
        lower_fit=lo,
        n_upper=int(s.upper.sum()),
        n_lower=int(s.lower.sum()),
        upper_violations=int(np.sum(s.log_scaled[s.upper] > upper_bound + slack)),
        lower_violations=int(np.sum(s.log_scaled[s.lower] < lower_bound - slack)),
    )
    logger.info("Gaussian fit: %s", fit)
    return fit


def diagonal_decay(
    field: ConductanceField, times: list[float], source: int | None = None
) -> np.ndarray:
    """q_t(x, x) t^{d/2} at each time; tends to a constant on homogeneous lattices."""
    source = field.box.origin if source is None else source
    tables = heat_kernel_series(field, times, [source])
    d = field.box.d
    return np.array([tb.values[0, source] * tb.t ** (d / 2) for tb in tables])
