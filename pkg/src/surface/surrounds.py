"""Whether a surface encloses a base-height cell."""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from src.surface.models import CellField, LipschitzSurface

logger = logging.getLogger(__name__)


def surface_cells(surface: LipschitzSurface, cells: CellField) -> np.ndarray:
    """Boolean mask over the base-height box of the cells (b, F+(b)) and (b, F-(b))."""
    blocked = np.zeros(cells.good.shape, dtype=bool)
    base = np.indices(cells.base_shape)
    for f in (surface.f_plus, surface.f_minus):
        if f is None:
            continue
        levels = np.asarray(f, dtype=np.int64) - cells.height_min
        inside = (levels >= 0) & (levels < cells.n_levels)
        idx = tuple(axis[inside] for axis in base) + (levels[inside],)
        blocked[idx] = True
    return blocked


def surrounds(blocked: np.ndarray, cell, D: int) -> bool:
    """True iff every cell reachable from ``cell`` without crossing ``blocked`` is within l1 distance D.

    Steps are between cells at l1 distance 1 inside the finite box. A start
    cell that is itself blocked reaches nothing.
    """
    blocked = np.asarray(blocked, dtype=bool)
    cell = tuple(int(c) for c in cell)
    if blocked[cell]:
        return True
    structure = ndimage.generate_binary_structure(blocked.ndim, 1)
    labels, _ = ndimage.label(~blocked, structure=structure)
    reach = np.argwhere(labels == labels[cell])
    far = int(np.abs(reach - np.asarray(cell)).sum(axis=1).max())
    logger.debug("Component of %s: %d cells, farthest at l1 distance %d", cell, len(reach), far)
    return far <= D


def surrounds_origin(surface: LipschitzSurface, cells: CellField, D: int) -> bool:
    return surrounds(surface_cells(surface, cells), cells.origin, D)
