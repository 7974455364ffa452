"""Exact kernels of walks conditioned to keep their displacement in a cube."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.errors import ConfigurationError
from src.lattice.field import ConductanceField
from src.spectral.heat_kernel import DEFAULT_TOL, uniformize
from src.utils.stats import LinearFit, linear_fit

logger = logging.getLogger(__name__)

MIN_STAY_PROBABILITY = 1e-6
CHUNK = 256


@dataclass
class ConfinedKernel:
    """g(x, y) = P_x[Y_delta = y | displacement stays in [-rho/2, rho/2]^d on [0, delta]]."""

    starts: np.ndarray
    values: np.ndarray
    stay_probability: np.ndarray
    delta: float
    rho: float | None
    truncation_error: float

    def row(self, x: int) -> np.ndarray:
        hits = np.flatnonzero(self.starts == x)
        if not hits.size:
            raise KeyError(f"Vertex {x} is not a start of this kernel")
        return self.values[int(hits[0])]


def confinement_mask(field: ConductanceField, starts: np.ndarray, rho: float) -> np.ndarray:
    """(S, N) vertices reachable from each start without leaving start + Q_rho."""
    box = field.box
    coords = box.coords(np.arange(box.n_vertices))
    diff = box.delta(box.coords(starts)[:, None, :], coords[None, :, :])
    return np.abs(diff).max(axis=2) <= rho / 2


def confined_kernel(
    field: ConductanceField,
    delta: float,
    rho: float | None,
    starts,
    tol: float = DEFAULT_TOL,
) -> ConfinedKernel:
    """Kernel of the walk killed on leaving start + Q_rho, renormalized by its mass.

    ``rho=None`` gives the unconfined kernel p_delta(x, .).
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
    box = field.box
    if rho is not None and box.is_torus and 2 * math.floor(rho / 2) + 1 >= box.side:
        raise ConfigurationError(
            f"Confinement cube of side rho={rho:g} wraps around the torus of side {box.side}"
        )
    if np.any(field.mu[starts] == 0):
        raise ConfigurationError("Confined kernel started at an isolated vertex")

    values = np.empty((starts.size, box.n_vertices))
    error = 0.0
    for lo in range(0, starts.size, CHUNK):
        chunk = starts[lo : lo + CHUNK]
        initial = np.zeros((chunk.size, box.n_vertices))
        initial[np.arange(chunk.size), chunk] = 1.0
        mask = None if rho is None else confinement_mask(field, chunk, rho)
        out, errors = uniformize(field, initial, [delta], tol, mask=mask)
        values[lo : lo + chunk.size] = out[0]
        error = max(error, float(errors[0]))

    stay = values.sum(axis=1)
    if np.any(stay < MIN_STAY_PROBABILITY):
        worst = int(starts[np.argmin(stay)])
        raise ConfigurationError(
            f"Staying probability {stay.min():.2e} < {MIN_STAY_PROBABILITY:g} from vertex "
            f"{worst} (delta={delta:g}, rho={rho})"
        )
    return ConfinedKernel(
        starts=starts,
        values=values / stay[:, None],
        stay_probability=stay,
        delta=delta,
        rho=rho,
        truncation_error=error,
    )


@dataclass
class KernelOscillation:
    """max_{x,z in cube, y} |g(x,y) - g(z,y)| / mu_y per delta, against C ell^Theta delta^{-(d+Theta)/2}."""

    ell: int
    theta: float
    d: int
    deltas: list[float] = field(default_factory=list)
    oscillations: list[float] = field(default_factory=list)
    fit: LinearFit | None = None

    @property
    def constant(self) -> float:
        """Smallest C making the bound hold at every delta examined."""
        return max(
            osc / (self.ell**self.theta * dt ** (-(self.d + self.theta) / 2))
            for dt, osc in zip(self.deltas, self.oscillations)
        )

    @property
    def slope(self) -> float:
        return self.fit.slope if self.fit else float("nan")

    @property
    def predicted_slope(self) -> float:
        return -(self.d + self.theta) / 2


def kernel_oscillation_check(
    field: ConductanceField,
    deltas: list[float],
    rho: float | None,
    ell: int,
    theta: float,
    lower=None,
    rho_factor: float | None = None,
    tol: float = DEFAULT_TOL,
) -> KernelOscillation:
    """Oscillation of confined kernels over starts in the cube ``lower + [0, ell)^d``.

    With ``rho_factor`` the confinement side scales as rho_factor * sqrt(delta).
    """
    box = field.box
    lower = box.origin_coords if lower is None else np.asarray(lower)
    cube = box.cube(lower, ell)
    cube = cube[field.mu[cube] > 0]
    mu = field.mu
    report = KernelOscillation(ell=ell, theta=theta, d=box.d)
    for dt in deltas:
        side = rho_factor * math.sqrt(dt) if rho_factor is not None else rho
        kern = confined_kernel(field, dt, side, cube, tol)
        scaled = np.divide(kern.values, mu, out=np.zeros_like(kern.values), where=mu > 0)
        osc = float((scaled.max(axis=0) - scaled.min(axis=0)).max())
        report.deltas.append(float(dt))
        report.oscillations.append(osc)
        logger.debug("delta=%g: max oscillation %.4e", dt, osc)
    positive = [(dt, o) for dt, o in zip(report.deltas, report.oscillations) if o > 0]
    if len(positive) >= 2:
        report.fit = linear_fit(np.log([p[0] for p in positive]), np.log([p[1] for p in positive]))
    return report
