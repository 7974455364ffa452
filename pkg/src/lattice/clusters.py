"""Connected components of the positive-weight graph."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from src.errors import ConfigurationError
from src.lattice.field import ConductanceField, sample_conductances
from src.lattice.models import LatticeBox, LawSpec

logger = logging.getLogger(__name__)


@dataclass
class ClusterMap:
    labels: np.ndarray
    largest_id: int
    largest_size: int
    origin: int

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def origin_in_largest(self) -> bool:
        return bool(self.labels[self.origin] == self.largest_id)

    @property
    def origin_isolated(self) -> bool:
        return bool(np.sum(self.labels == self.labels[self.origin]) == 1)

    @property
    def largest_fraction(self) -> float:
        return self.largest_size / self.labels.size

    def members(self, component: int | None = None) -> np.ndarray:
        comp = self.largest_id if component is None else component
        return np.flatnonzero(self.labels == comp)

    def __str__(self) -> str:
        return (
            f"{self.n_components} components, largest {self.largest_size} "
            f"({self.largest_fraction:.1%}), origin in largest: {self.origin_in_largest}"
        )


def largest_cluster(field: ConductanceField) -> ClusterMap:
    """Label components; ties for the largest go to the lowest label."""
    _, labels = csgraph.connected_components(field.adjacency, directed=False)
    sizes = np.bincount(labels)
    largest = int(np.argmax(sizes))
    cmap = ClusterMap(
        labels=labels,
        largest_id=largest,
        largest_size=int(sizes[largest]),
        origin=field.box.origin,
    )
    if cmap.origin_isolated:
        logger.debug("Origin is isolated in field seed=%s", field.seed)
    return cmap


def sample_field_with_origin(
    box: LatticeBox, law: LawSpec, seed: int, max_tries: int = 100
) -> tuple[ConductanceField, ClusterMap]:
    """Resample with seed, seed+1, ... until the origin lies in the largest component."""
    for attempt in range(max_tries):
        field = sample_conductances(box, law, seed + attempt)
        cmap = largest_cluster(field)
        if cmap.origin_in_largest:
            if attempt:
                logger.info("Origin joined the largest cluster after %d resamples", attempt)
            return field, cmap
    raise ConfigurationError(
        f"Origin never in the largest cluster after {max_tries} samples from seed {seed}"
    )
