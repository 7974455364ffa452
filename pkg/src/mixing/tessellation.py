"""Cube tessellations and per-subcube density certificates."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from src.errors import ConfigurationError
from src.lattice.field import ConductanceField
from src.lattice.models import LatticeBox
from src.mixing.cloud import ParticleCloud

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tessellation:
    """Q_K centred at the box origin, cut into subcubes of side ``ell``.

    ``K`` is rounded down to a multiple of ``ell``. The retained cube Q_K' is
    centred at the origin as well.
    """

    box: LatticeBox
    K: int
    ell: int
    K_prime: int

    @classmethod
    def build(cls, box: LatticeBox, K: int, ell: int, K_prime: int) -> Tessellation:
        if ell < 1:
            raise ConfigurationError(f"ell must be >= 1, got {ell}")
        K_round = (K // ell) * ell
        if K_round != K:
            logger.info("Rounded K=%d down to %d (multiple of ell=%d)", K, K_round, ell)
        if K_round < ell:
            raise ConfigurationError(f"K={K} is smaller than ell={ell}")
        if not 0 < K_prime < K_round:
            raise ConfigurationError(f"Need 0 < K'={K_prime} < K={K_round}")
        tess = cls(box=box, K=K_round, ell=ell, K_prime=K_prime)
        if not box.cube_fits(tess.lower, K_round):
            raise ConfigurationError(f"Q_K with K={K_round} does not fit in {box}")
        return tess

    @property
    def lower(self) -> np.ndarray:
        return self.box.origin_coords - self.K // 2

    @property
    def inner_lower(self) -> np.ndarray:
        return self.box.origin_coords - self.K_prime // 2

    @property
    def n_per_axis(self) -> int:
        return self.K // self.ell

    @cached_property
    def indices(self) -> list[tuple[int, ...]]:
        return list(itertools.product(range(self.n_per_axis), repeat=self.box.d))

    def outer_vertices(self) -> np.ndarray:
        return self.box.cube(self.lower, self.K)

    def inner_vertices(self) -> np.ndarray:
        return self.box.cube(self.inner_lower, self.K_prime)

    def subcube_vertices(self, index: tuple[int, ...]) -> np.ndarray:
        return self.box.cube(self.lower + self.ell * np.asarray(index), self.ell)

    @cached_property
    def labels(self) -> np.ndarray:
        """Subcube number of every vertex, -1 outside Q_K."""
        out = np.full(self.box.n_vertices, -1, dtype=np.int64)
        for k, idx in enumerate(self.indices):
            out[self.subcube_vertices(idx)] = k
        return out


@dataclass
class DensityCertificate:
    beta: float
    required: np.ndarray
    actual: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.actual >= self.required))

    @property
    def failing(self) -> np.ndarray:
        return np.flatnonzero(self.actual < self.required)


def required_mass(field: ConductanceField, tess: Tessellation, beta: float) -> np.ndarray:
    """sum over each subcube of beta mu_y."""
    inside = tess.labels >= 0
    return np.bincount(
        tess.labels[inside], weights=beta * field.mu[inside], minlength=len(tess.indices)
    )


def density_check(
    field: ConductanceField, cloud: ParticleCloud, tess: Tessellation, beta: float
) -> DensityCertificate:
    """Compare per-subcube particle counts to sum_{y in T_i} beta mu_y."""
    labels = tess.labels[cloud.vertices]
    actual = np.bincount(labels[labels >= 0], minlength=len(tess.indices))
    return DensityCertificate(
        beta=beta, required=required_mass(field, tess, beta), actual=actual
    )
