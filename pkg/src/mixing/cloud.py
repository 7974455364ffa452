"""Poisson particle clouds and their evolution under independent walks."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from src.lattice.field import ConductanceField
from src.walk.ensemble import DEFAULT_ACCEPTANCE_FLOOR, JumpBatch, advance, advance_confined

logger = logging.getLogger(__name__)


@dataclass
class ParticleCloud:
    """Particle positions at one time; particle ids are ``ids`` (default 0..n-1)."""

    time: float
    vertices: np.ndarray
    intensity: str = ""
    ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        if self.ids is None:
            self.ids = np.arange(self.vertices.size)

    def __len__(self) -> int:
        return int(self.vertices.size)

    def counts(self, n_vertices: int) -> np.ndarray:
        return np.bincount(self.vertices, minlength=n_vertices)


@dataclass
class EvolvedCloud:
    cloud: ParticleCloud
    batch: JumpBatch
    acceptance: float = 1.0


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_cloud(
    field: ConductanceField,
    lambda0: float,
    region: np.ndarray | None = None,
    seed: int | np.random.Generator = 0,
) -> ParticleCloud:
    """Independent Poisson(lambda0 mu_x) particles at each x of ``region`` (default: all)."""
    if lambda0 < 0:
        raise ValueError(f"lambda0 must be >= 0, got {lambda0}")
    rng = _rng(seed)
    region = np.arange(field.box.n_vertices) if region is None else np.asarray(region)
    counts = rng.poisson(lambda0 * field.mu[region])
    return ParticleCloud(
        time=0.0,
        vertices=np.repeat(region, counts),
        intensity=f"lambda0={lambda0:g}",
    )


def evolve_cloud(
    field: ConductanceField,
    cloud: ParticleCloud,
    delta: float,
    rho: float | None = None,
    seed: int | np.random.Generator = 0,
    floor: float = DEFAULT_ACCEPTANCE_FLOOR,
) -> EvolvedCloud:
    """Move every particle by an independent walk for ``delta``.

    With ``rho``, each walk is conditioned by rejection to keep its displacement
    in [-rho/2, rho/2]^d; a particle that breaches the acceptance floor aborts.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    rng = _rng(seed)
    if rho is None:
        batch = advance(field, cloud.vertices, delta, rng, t0=cloud.time)
        acceptance = 1.0
    else:
        confined = advance_confined(field, cloud.vertices, delta, rng, rho=rho, floor=floor,
                                    t0=cloud.time)
        batch, acceptance = confined.batch, confined.acceptance
    moved = ParticleCloud(
        time=cloud.time + delta,
        vertices=batch.final.copy(),
        intensity=cloud.intensity,
        ids=cloud.ids,
    )
    return EvolvedCloud(cloud=moved, batch=batch, acceptance=acceptance)
