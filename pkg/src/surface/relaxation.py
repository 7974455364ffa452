"""Minimal Lipschitz surfaces through good cells.

The plus side is built by raising heights until nothing changes: every base
point starts at height 0 and is lifted to the next good height at or above
its current one, and to one less than its highest neighbour. Both moves are
forced for any admissible surface lying above the current heights, so the
fixpoint is the pointwise-minimal admissible surface. The minus side is the
plus side of the height-mirrored field.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from src.errors import ConfigurationError
from src.surface.models import CellField, LipschitzSurface, Side

logger = logging.getLogger(__name__)

# Largest instance the exhaustive oracle accepts.
ORACLE_MAX_BASE = 25
ORACLE_MAX_LEVELS = 6


def next_good_height(cells: CellField) -> np.ndarray:
    """Per base point and level k, the smallest good level >= k (n_levels if none)."""
    n = cells.n_levels
    idx = np.where(cells.good, np.arange(n), n)
    return np.minimum.accumulate(idx[..., ::-1], axis=-1)[..., ::-1]


def _neighbour_max(f: np.ndarray) -> np.ndarray:
    """max over l1 neighbours in the (non-periodic) base box, -inf-like where none."""
    low = np.iinfo(np.int64).min // 2
    out = np.full(f.shape, low, dtype=np.int64)
    for axis in range(f.ndim):
        if f.shape[axis] < 2:
            continue
        hi = [slice(None)] * f.ndim
        lo = [slice(None)] * f.ndim
        hi[axis], lo[axis] = slice(1, None), slice(None, -1)
        out[tuple(lo)] = np.maximum(out[tuple(lo)], f[tuple(hi)])
        out[tuple(hi)] = np.maximum(out[tuple(hi)], f[tuple(lo)])
    return out


def _plus_levels(cells: CellField) -> np.ndarray | None:
    """Minimal surface as levels of ``cells``, starting from the level of height 0."""
    start = cells.level(0)
    if not 0 <= start < cells.n_levels:
        raise ConfigurationError(
            f"Height 0 is outside the field's heights [{cells.height_min}, {cells.height_max}]"
        )
    table = next_good_height(cells)
    n = cells.n_levels
    f = np.full(cells.base_shape, start, dtype=np.int64)
    rounds = 0
    while True:
        rounds += 1
        lifted = np.take_along_axis(table, f[..., None], axis=-1)[..., 0]
        if np.any(lifted >= n):
            logger.debug("No good cell left above some base point after %d rounds", rounds)
            return None
        lifted = np.maximum(lifted, _neighbour_max(lifted) - 1)
        if np.any(lifted >= n):
            return None
        if np.array_equal(lifted, f):
            logger.debug("Relaxation converged in %d rounds", rounds)
            return f
        f = lifted


def min_lipschitz_surface(cells: CellField, side: Side | str = Side.PLUS) -> np.ndarray | None:
    """Pointwise-minimal (in |h|) Lipschitz surface of good cells on one side, or None."""
    side = Side(side)
    if side == Side.PLUS:
        levels = _plus_levels(cells)
        return None if levels is None else levels + cells.height_min
    mirrored = cells.mirrored()
    levels = _plus_levels(mirrored)
    return None if levels is None else -(levels + mirrored.height_min)


def two_sided_surface(cells: CellField) -> LipschitzSurface:
    surface = LipschitzSurface(
        f_plus=min_lipschitz_surface(cells, Side.PLUS),
        f_minus=min_lipschitz_surface(cells, Side.MINUS),
    )
    logger.info("%s", surface)
    return surface


def check_surface(cells: CellField, f: np.ndarray, side: Side | str = Side.PLUS) -> list[str]:
    """Violations of the surface invariants, empty when ``f`` is admissible."""
    side = Side(side)
    f = np.asarray(f, dtype=np.int64)
    problems = []
    if f.shape != cells.base_shape:
        return [f"shape {f.shape} does not match base {cells.base_shape}"]
    if side == Side.PLUS and np.any(f < 0):
        problems.append("F+ is negative somewhere")
    if side == Side.MINUS and np.any(f > 0):
        problems.append("F- is positive somewhere")
    for axis in range(f.ndim):
        if np.any(np.abs(np.diff(f, axis=axis)) > 1):
            problems.append(f"Lipschitz condition fails along base axis {axis}")
    for b in np.ndindex(*cells.base_shape):
        if not cells.is_good(b, int(f[b])):
            problems.append(f"cell {b + (int(f[b]),)} on the surface is bad")
            break
    return problems


def is_minimal(cells: CellField, f: np.ndarray, side: Side | str = Side.PLUS) -> bool:
    """Whether lowering any single |F(b)| by one breaks admissibility."""
    side = Side(side)
    f = np.asarray(f, dtype=np.int64)
    if check_surface(cells, f, side):
        return False
    step = -1 if side == Side.PLUS else 1
    for b in np.ndindex(*cells.base_shape):
        if f[b] == 0:
            continue
        lowered = f.copy()
        lowered[b] += step
        if not check_surface(cells, lowered, side):
            return False
    return True


def brute_force_min_surface(cells: CellField, side: Side | str = Side.PLUS) -> np.ndarray | None:
    """Exhaustive minimal surface for small fields.

    For each base point, the smallest height for which some admissible
    surface exists, found by depth-first search with forward checking. The
    pointwise minimum of admissible surfaces is itself admissible, so these
    minima form the minimal surface.
    """
    side = Side(side)
    if side == Side.MINUS:
        out = brute_force_min_surface(cells.mirrored(), Side.PLUS)
        return None if out is None else -out
    n_base = math.prod(cells.base_shape)
    if n_base > ORACLE_MAX_BASE or cells.n_levels > ORACLE_MAX_LEVELS:
        raise ConfigurationError(
            f"Oracle limited to {ORACLE_MAX_BASE} base points and {ORACLE_MAX_LEVELS} levels"
        )
    points = list(np.ndindex(*cells.base_shape))
    index = {b: k for k, b in enumerate(points)}
    nbrs = [
        [
            index[nb]
            for axis in range(len(b))
            for step in (-1, 1)
            if (nb := b[:axis] + (b[axis] + step,) + b[axis + 1 :]) in index
        ]
        for b in points
    ]
    heights = [h for h in cells.heights if h >= 0]
    domains = [[h for h in heights if cells.is_good(b, h)] for b in points]
    if any(not dom for dom in domains):
        return None

    def solve(doms: list[list[int]], k: int) -> bool:
        if k == len(points):
            return True
        for h in doms[k]:
            pruned = list(doms)
            ok = True
            for m in nbrs[k]:
                if m > k:
                    pruned[m] = [g for g in pruned[m] if abs(g - h) <= 1]
                    if not pruned[m]:
                        ok = False
                        break
            if ok and solve(pruned, k + 1):
                return True
        return False

    result = np.empty(cells.base_shape, dtype=np.int64)
    for k, b in enumerate(points):
        for h in domains[k]:
            trial = list(domains)
            trial[k] = [h]
            if solve(trial, 0):
                result[b] = h
                break
        else:
            return None
    return result
