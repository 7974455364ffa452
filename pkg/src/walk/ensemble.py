"""Vectorized engine advancing many independent walkers over a time window.

Each walker jumps at total rate 1, so over a window of length ``duration`` its
number of jumps is Poisson(duration) and, given the count, the jump times are
uniform order statistics. Neighbour choices are then made in rounds: round k
moves every walker that has at least k + 1 jumps, one numpy pass per round.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from src.errors import RejectionFloorError
from src.lattice.field import ConductanceField

logger = logging.getLogger(__name__)

DEFAULT_ACCEPTANCE_FLOOR = 1e-4


@dataclass
class JumpBatch:
    """Jump records of a walker ensemble, sorted by walker and then time."""

    starts: np.ndarray
    t0: float
    t1: float
    walker: np.ndarray
    time: np.ndarray
    vertex: np.ndarray
    slot: np.ndarray
    final: np.ndarray
    displacement: np.ndarray
    excursion: np.ndarray

    @property
    def n_walkers(self) -> int:
        return int(self.starts.size)

    @property
    def n_jumps(self) -> int:
        return int(self.walker.size)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.bincount(self.walker, minlength=self.n_walkers)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts)))

    def jumps_of(self, w: int) -> slice:
        return slice(int(self.offsets[w]), int(self.offsets[w + 1]))

    def first_hit(self, mask: np.ndarray) -> np.ndarray:
        """Per walker, first time it sits on a vertex in ``mask`` (inf if never)."""
        hit = np.full(self.n_walkers, np.inf)
        hit[mask[self.starts]] = self.t0
        idx = np.flatnonzero(mask[self.vertex])
        if idx.size:
            walkers, first = np.unique(self.walker[idx], return_index=True)
            fresh = ~np.isfinite(hit[walkers])
            hit[walkers[fresh]] = self.time[idx[first]][fresh]
        return hit

    def visits_outside(self, region: np.ndarray) -> np.ndarray:
        """Per walker, whether any occupied vertex lies outside ``region``."""
        out = ~region[self.starts]
        bad = ~region[self.vertex]
        out |= np.bincount(self.walker[bad], minlength=self.n_walkers) > 0
        return out

    def subset(self, walkers: np.ndarray) -> JumpBatch:
        """Records of the selected walkers, renumbered in ascending id order."""
        walkers = np.unique(np.asarray(walkers, dtype=np.int64))
        member = np.zeros(self.n_walkers, dtype=bool)
        member[walkers] = True
        pick = np.flatnonzero(member[self.walker])
        remap = np.full(self.n_walkers, -1, dtype=np.int64)
        remap[walkers] = np.arange(walkers.size)
        return JumpBatch(
            starts=self.starts[walkers],
            t0=self.t0,
            t1=self.t1,
            walker=remap[self.walker[pick]],
            time=self.time[pick],
            vertex=self.vertex[pick],
            slot=self.slot[pick],
            final=self.final[walkers],
            displacement=self.displacement[walkers],
            excursion=self.excursion[walkers],
        )


@dataclass
class Segments:
    """Occupation intervals [start, end) of walkers on vertices."""

    walker: np.ndarray
    vertex: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def __len__(self) -> int:
        return int(self.walker.size)


def segments(batch: JumpBatch) -> Segments:
    """Turn jump records into per-walker occupation intervals, sorted by walker."""
    w = np.concatenate((np.arange(batch.n_walkers), batch.walker))
    t = np.concatenate((np.full(batch.n_walkers, batch.t0), batch.time))
    v = np.concatenate((batch.starts, batch.vertex))
    # starts come first in the concatenation and lexsort is stable
    order = np.lexsort((t, w))
    w, t, v = w[order], t[order], v[order]
    end = np.empty_like(t)
    end[:-1] = t[1:]
    end[-1:] = batch.t1
    last = np.ones(w.size, dtype=bool)
    last[:-1] = w[1:] != w[:-1]
    end[last] = batch.t1
    return Segments(walker=w, vertex=v, start=t, end=end)


def advance(
    field: ConductanceField,
    positions: np.ndarray,
    duration: float,
    rng: np.random.Generator,
    t0: float = 0.0,
) -> JumpBatch:
    """Advance independent walkers started at ``positions`` for ``duration``."""
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    starts = np.asarray(positions, dtype=np.int64).ravel()
    n = starts.size
    d = field.box.d

    counts = rng.poisson(duration, size=n) if duration > 0 else np.zeros(n, dtype=np.int64)
    counts[field.mu[starts] == 0] = 0
    total = int(counts.sum())

    walker = np.repeat(np.arange(n, dtype=np.int64), counts)
    time = t0 + duration * rng.random(total)
    order = np.lexsort((time, walker))
    walker, time = walker[order], time[order]

    offsets = np.concatenate(([0], np.cumsum(counts)))
    rank = np.arange(total) - offsets[walker]
    by_rank = np.argsort(rank, kind="stable")
    round_sizes = np.bincount(rank, minlength=0) if total else np.zeros(0, dtype=np.int64)

    vertex = np.empty(total, dtype=np.int64)
    slot = np.empty(total, dtype=np.int64)
    current = starts.copy()
    cdf, nbr = field.jump_cdf, field.neighbors
    lo = 0
    for size in round_sizes:
        idx = by_rank[lo : lo + size]
        lo += size
        who = walker[idx]
        cur = current[who]
        u = rng.random(idx.size)
        s = np.argmax(u[:, None] < cdf[cur], axis=1)
        nxt = nbr[cur, s]
        current[who] = nxt
        vertex[idx] = nxt
        slot[idx] = s

    displacement = np.zeros((n, d), dtype=np.int64)
    excursion = np.zeros(n, dtype=np.int64)
    if total:
        steps = field.slot_steps[slot]
        path = np.cumsum(steps, axis=0)
        path -= (path - steps)[offsets[walker]]
        moved = np.flatnonzero(counts)
        last = offsets[moved + 1] - 1
        displacement[moved] = path[last]
        excursion[moved] = np.maximum.reduceat(np.abs(path).max(axis=1), offsets[moved])

    return JumpBatch(
        starts=starts,
        t0=t0,
        t1=t0 + duration,
        walker=walker,
        time=time,
        vertex=vertex,
        slot=slot,
        final=current,
        displacement=displacement,
        excursion=excursion,
    )


def merge(batches: list[tuple[np.ndarray, JumpBatch]], n_walkers: int) -> JumpBatch:
    """Combine batches covering disjoint walker ids into one batch of ``n_walkers``."""
    if not batches:
        raise ValueError("Nothing to merge")
    t0, t1 = batches[0][1].t0, batches[0][1].t1
    d = batches[0][1].displacement.shape[1]
    starts = np.zeros(n_walkers, dtype=np.int64)
    final = np.zeros(n_walkers, dtype=np.int64)
    displacement = np.zeros((n_walkers, d), dtype=np.int64)
    excursion = np.zeros(n_walkers, dtype=np.int64)
    parts = []
    for ids, b in batches:
        starts[ids], final[ids] = b.starts, b.final
        displacement[ids], excursion[ids] = b.displacement, b.excursion
        parts.append((ids[b.walker], b.time, b.vertex, b.slot))
    walker = np.concatenate([p[0] for p in parts])
    time = np.concatenate([p[1] for p in parts])
    order = np.lexsort((time, walker))
    return JumpBatch(
        starts=starts,
        t0=t0,
        t1=t1,
        walker=walker[order],
        time=time[order],
        vertex=np.concatenate([p[2] for p in parts])[order],
        slot=np.concatenate([p[3] for p in parts])[order],
        final=final,
        displacement=displacement,
        excursion=excursion,
    )


@dataclass
class ConfinedEnsemble:
    batch: JumpBatch
    attempts: np.ndarray

    @property
    def acceptance(self) -> float:
        """Pooled acceptance frequency, an estimate of the staying probability."""
        total = int(self.attempts.sum())
        return self.batch.n_walkers / total if total else 1.0


def advance_confined(
    field: ConductanceField,
    positions: np.ndarray,
    duration: float,
    rng: np.random.Generator,
    rho: float | None = None,
    region: np.ndarray | None = None,
    floor: float = DEFAULT_ACCEPTANCE_FLOOR,
    t0: float = 0.0,
) -> ConfinedEnsemble:
    """Advance walkers conditioned by rejection to stay confined.

    A path is kept when its l_inf displacement never exceeds rho / 2 and, if a
    ``region`` mask is given, it never visits a vertex outside the region.
    Rejected walkers are resimulated from their start. A walker still without
    an accepted path after ceil(10 / floor) attempts aborts the run.
    """
    starts = np.asarray(positions, dtype=np.int64).ravel()
    n = starts.size
    attempts = np.zeros(n, dtype=np.int64)
    max_attempts = math.ceil(10 / floor)
    pending = np.arange(n)
    accepted: list[tuple[np.ndarray, JumpBatch]] = []

    while pending.size:
        batch = advance(field, starts[pending], duration, rng, t0=t0)
        attempts[pending] += 1
        ok = np.ones(pending.size, dtype=bool)
        if rho is not None:
            ok &= batch.excursion <= rho / 2
        if region is not None:
            ok &= ~batch.visits_outside(region)
        good = np.flatnonzero(ok)
        if good.size:
            accepted.append((pending[good], batch.subset(good)))
        pending = pending[~ok]
        if pending.size and attempts[pending].max() >= max_attempts:
            worst = int(pending[np.argmax(attempts[pending])])
            acceptance = (n - pending.size) / max(int(attempts.sum()), 1)
            raise RejectionFloorError(
                f"Walker {worst} found no confined path in {max_attempts} attempts "
                f"(pooled acceptance {acceptance:.2e} < floor {floor:g})",
                walker=worst,
                acceptance=acceptance,
            )

    if not accepted:
        accepted.append((np.empty(0, dtype=np.int64), advance(field, starts[:0], duration, rng, t0)))
    result = ConfinedEnsemble(batch=merge(accepted, n), attempts=attempts)
    if n and result.acceptance < floor:
        raise RejectionFloorError(
            f"Pooled acceptance {result.acceptance:.2e} below floor {floor:g}",
            acceptance=result.acceptance,
        )
    logger.debug("Confined %d walkers, acceptance %.4f", n, result.acceptance)
    return result
