"""Local mixing experiment: dense clouds coupled to a fresh Poisson cloud on Q_K'."""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import ConfigurationError, SimulationAbort
from src.lattice.field import ConductanceField
from src.mixing.cloud import sample_cloud
from src.mixing.confined import confined_kernel
from src.mixing.soft_local_times import OUTSIDE, soft_local_time_coupling
from src.mixing.tessellation import Tessellation, density_check, required_mass
from src.spectral.heat_kernel import heat_kernel_exact
from src.utils.seeds import derive_seed
from src.utils.stats import Proportion, wilson_interval

logger = logging.getLogger(__name__)


class MarginPolicy(str, enum.Enum):
    SIMPLE = "simple"  # K - K' >= c3 ell eps^{-c4}
    MIXING = "mixing"  # K - K' >= c1 sqrt(Delta) eps^{-1/d}
    CONFINED = "confined"  # K - K' >= c1 sqrt(Delta log Delta)


class Placement(str, enum.Enum):
    POISSON = "poisson"
    MINIMAL = "minimal"


class MixingParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: int = Field(default=64, ge=1)
    ell: int = Field(default=8, ge=1)
    Kprime: int = Field(default=16, ge=1)
    eps: float = Field(default=0.5, gt=0, le=1)
    beta: float = Field(default=1.0, ge=0)
    Delta: float = Field(default=256.0, gt=0)
    lambda0: float | None = Field(default=None, gt=0)
    placement: Placement = Placement.MINIMAL
    margin: MarginPolicy = MarginPolicy.MIXING
    rho: float | None = Field(default=None, gt=0)
    c0: float = 1.0
    c1: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    theta: float | None = Field(default=None, gt=0)
    max_resamples: int = Field(default=100, ge=1)

    @property
    def intensity(self) -> float:
        return 2 * self.beta if self.lambda0 is None else self.lambda0


def margin_required(params: MixingParams, d: int) -> float:
    if params.margin == MarginPolicy.SIMPLE:
        return params.c3 * params.ell * params.eps ** (-params.c4)
    if params.margin == MarginPolicy.MIXING:
        return params.c1 * math.sqrt(params.Delta) * params.eps ** (-1 / d)
    return params.c1 * math.sqrt(params.Delta * max(math.log(params.Delta), 0.0))


def margin_violations(params: MixingParams, d: int) -> list[str]:
    """Inter-parameter rules of the mixing geometry, as readable messages."""
    out = []
    need = margin_required(params, d)
    if params.K - params.Kprime < need:
        out.append(
            f"K - K' = {params.K - params.Kprime} below the {params.margin.value} margin "
            f"{need:.3f}"
        )
    if params.theta is not None:
        floor = params.c0 * params.ell**2 * params.eps ** (-4 / params.theta)
        if params.Delta < floor:
            out.append(f"Delta = {params.Delta:g} below c0 ell^2 eps^(-4/Theta) = {floor:.3f}")
    return out


@dataclass
class MixingSetup:
    """Everything shared by the reps of one (field, params) pair."""

    field: ConductanceField
    params: MixingParams
    tess: Tessellation
    window: np.ndarray
    kernels: np.ndarray  # (N, |window|): g_x(window site) for start vertex x
    zeta: np.ndarray

    @property
    def required(self) -> np.ndarray:
        return required_mass(self.field, self.tess, self.params.beta)


def prepare_mixing(field: ConductanceField, params: MixingParams) -> MixingSetup:
    box = field.box
    tess = Tessellation.build(box, params.K, params.ell, params.Kprime)
    problems = [v for v in margin_violations(params, box.d) if v.startswith("K - K'")]
    if problems:
        raise ConfigurationError("; ".join(problems))
    window = tess.inner_vertices()
    window = window[field.mu[window] > 0]
    kernels = np.zeros((box.n_vertices, window.size))

    if params.rho is None:
        # reversibility: p(x, a) = mu_a q(a, x)
        table = heat_kernel_exact(field, params.Delta, window)
        kernels[:] = (table.values * field.mu[window][:, None]).T
    else:
        outer = tess.outer_vertices()
        outer = outer[field.mu[outer] > 0]
        gap = box.delta(
            box.coords(outer)[:, None, :], box.coords(window)[None, :, :]
        )
        near = outer[(np.abs(gap).max(axis=2) <= params.rho / 2).any(axis=1)]
        kern = confined_kernel(field, params.Delta, params.rho, near)
        kernels[near] = kern.values[:, window]

    zeta = params.beta * (1 - params.eps) * field.mu[window]
    logger.info(
        "Mixing setup: K=%d ell=%d K'=%d Delta=%g, %d window sites",
        tess.K, params.ell, params.Kprime, params.Delta, window.size,
    )
    return MixingSetup(
        field=field, params=params, tess=tess, window=window, kernels=kernels, zeta=zeta
    )


def place_particles(setup: MixingSetup, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Initial positions passing the density certificate, and the number of resamples."""
    params, tess, fld = setup.params, setup.tess, setup.field
    if params.placement == Placement.MINIMAL:
        parts = []
        for k, idx in enumerate(tess.indices):
            cube = tess.subcube_vertices(idx)
            cube = cube[fld.mu[cube] > 0]
            n = math.ceil(setup.required[k] - 1e-9)
            if n and not cube.size:
                raise ConfigurationError(f"Subcube {idx} has no usable vertex")
            parts.append(rng.choice(cube, size=n) if n else np.empty(0, dtype=np.int64))
        return np.concatenate(parts).astype(np.int64), 0

    outer = tess.outer_vertices()
    for resamples in range(params.max_resamples):
        cloud = sample_cloud(fld, params.intensity, outer, rng)
        if density_check(fld, cloud, tess, params.beta).passed:
            return cloud.vertices, resamples
    raise SimulationAbort(
        f"Density certificate failed {params.max_resamples} times at lambda0={params.intensity}"
    )


@dataclass
class MixingRep:
    seed: int
    success: bool
    contained: bool
    n_particles: int
    resamples: int
    failure_sites: list[int] = field(default_factory=list)


def run_mixing_rep(setup: MixingSetup, seed: int) -> MixingRep:
    rng = np.random.default_rng(seed)
    starts, resamples = place_particles(setup, rng)
    report = soft_local_time_coupling(starts, setup.kernels, setup.zeta, rng)
    if report.success and not report.containment_holds():
        raise RuntimeError(f"Coupling succeeded but psi is not contained in endpoints (seed {seed})")
    return MixingRep(
        seed=seed,
        success=report.success,
        contained=report.contained,
        n_particles=int(starts.size),
        resamples=resamples,
        failure_sites=[int(setup.window[s]) for s in report.failure_sites if s != OUTSIDE],
    )


@dataclass
class MixingResult:
    delta: float
    reps: list[MixingRep] = field(default_factory=list)

    @property
    def estimate(self) -> Proportion:
        return wilson_interval(sum(r.success for r in self.reps), len(self.reps))

    @property
    def failure_profile(self) -> Counter:
        return Counter(v for r in self.reps for v in r.failure_sites)

    @property
    def density_resamples(self) -> int:
        return sum(r.resamples for r in self.reps)

    def __str__(self) -> str:
        return f"Delta={self.delta:g}: success {self.estimate}"


def mixing_experiment(
    field: ConductanceField, params: MixingParams, reps: int, seed: int
) -> MixingResult:
    setup = prepare_mixing(field, params)
    result = MixingResult(delta=params.Delta)
    for i in range(reps):
        result.reps.append(run_mixing_rep(setup, derive_seed(seed, "mixing", i)))
    logger.info("%s", result)
    return result


def mixing_curve(
    field: ConductanceField, params: MixingParams, deltas: list[float], reps: int, seed: int
) -> list[MixingResult]:
    return [
        mixing_experiment(field, params.model_copy(update={"Delta": dt}), reps, seed)
        for dt in deltas
    ]


def theoretical_failure_bound(
    field: ConductanceField, window: np.ndarray, beta: float, eps: float, delta: float, C: float
) -> float:
    """sum over the window of exp(-C beta mu_y eps^2 delta^{d/2})."""
    d = field.box.d
    return float(np.sum(np.exp(-C * beta * field.mu[window] * eps**2 * delta ** (d / 2))))
