"""Soft local times: coupling particle endpoints with an independent Poisson process.

The coupling uses a Poisson process on sites x [0, inf) with unit intensity in
the level coordinate. Particle j raises the level at every site y at speed
g_j(y) until the first unclaimed point is touched; that point's site is the
endpoint Y_j and the time it took is xi_j, which is exponential(1) when g_j is
a probability vector. Points below the target intensity zeta(y) form the
coupled Poisson process psi; when the accumulated level H dominates zeta
everywhere, every psi point has been claimed by a distinct particle.

Points are generated lazily: each site keeps only the gap from its current
level to the next unclaimed point, which is exponential by memorylessness.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

OUTSIDE = -1


def soft_local_time(xi: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """H(y) = sum_j xi_j g_j(y)."""
    return np.asarray(xi, dtype=float) @ np.asarray(kernels, dtype=float)


@dataclass
class CouplingReport:
    """Outcome of one coupling run over ``n_sites`` sites."""

    xi: np.ndarray
    endpoints: np.ndarray
    claim_levels: np.ndarray
    H: np.ndarray
    zeta: np.ndarray
    psi_sites: np.ndarray
    psi_levels: np.ndarray
    psi_claimed_by: np.ndarray
    failure_sites: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def success(self) -> bool:
        """H dominates zeta at every site."""
        return self.failure_sites.size == 0

    @property
    def contained(self) -> bool:
        """Every psi point was claimed by some particle."""
        return bool(np.all(self.psi_claimed_by >= 0))

    @property
    def matching(self) -> dict[int, int]:
        """psi point index -> claiming particle, for claimed points."""
        return {
            int(i): int(j) for i, j in enumerate(self.psi_claimed_by) if j >= 0
        }

    def containment_holds(self) -> bool:
        """Per site, #psi points <= #particles ending there, with an injective matching."""
        n_sites = self.H.size
        psi_counts = np.bincount(self.psi_sites, minlength=n_sites)
        ends = self.endpoints[self.endpoints >= 0]
        end_counts = np.bincount(ends, minlength=n_sites)
        claimed = self.psi_claimed_by[self.psi_claimed_by >= 0]
        injective = np.unique(claimed).size == claimed.size
        same_site = np.all(self.endpoints[claimed] == self.psi_sites[self.psi_claimed_by >= 0])
        return bool(np.all(psi_counts <= end_counts) and injective and same_site)


def soft_local_time_coupling(
    starts: np.ndarray,
    kernels: np.ndarray,
    zeta: np.ndarray,
    seed: int | np.random.Generator = 0,
) -> CouplingReport:
    """Run the claiming construction for particles j with kernel rows ``kernels[starts[j]]``.

    ``kernels`` has one row per start label and one column per site; rows may
    sum to less than one, the deficit being mass outside the observed sites
    (endpoint ``OUTSIDE``, where zeta is zero).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    starts = np.asarray(starts, dtype=np.int64)
    kernels = np.asarray(kernels, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    n_sites = kernels.shape[1]
    if zeta.shape != (n_sites,) or np.any(zeta < 0):
        raise ValueError("zeta must be a nonnegative vector over the sites")
    if np.any(kernels < 0):
        raise ValueError("Kernel rows must be nonnegative")
    totals = kernels.sum(axis=1)
    if np.any(totals > 1 + 1e-9):
        raise ValueError("Kernel rows must sum to at most 1")
    outside = np.clip(1.0 - totals, 0.0, None)
    outside[outside < 1e-15] = 0.0
    rows_used = np.unique(starts)
    dead = rows_used[(totals[rows_used] <= 0) & (outside[rows_used] <= 0)]
    if dead.size:
        raise ValueError(f"Kernel rows identically zero: {dead.tolist()}")

    # last slot is the outside pseudo-site
    level = np.zeros(n_sites + 1)
    gap = rng.exponential(size=n_sites + 1)
    claims: list[list[tuple[float, int]]] = [[] for _ in range(n_sites)]
    J = starts.size
    xi = np.empty(J)
    endpoints = np.empty(J, dtype=np.int64)
    claim_levels = np.empty(J)
    row = np.empty(n_sites + 1)

    for j, s in enumerate(starts):
        row[:n_sites] = kernels[s]
        row[n_sites] = outside[s]
        with np.errstate(divide="ignore"):
            ratio = np.where(row > 0, gap / row, np.inf)
        y = int(np.argmin(ratio))
        step = float(ratio[y])
        level += step * row
        gap -= step * row
        np.clip(gap, 0.0, None, out=gap)
        gap[y] = rng.exponential()
        xi[j] = step
        claim_levels[j] = level[y]
        if y == n_sites:
            endpoints[j] = OUTSIDE
        else:
            endpoints[j] = y
            claims[y].append((level[y], j))

    H = level[:n_sites]
    psi_sites, psi_levels, psi_owner = [], [], []
    for y in np.flatnonzero(zeta > 0):
        for lev, j in claims[y]:
            if lev <= zeta[y]:
                psi_sites.append(y)
                psi_levels.append(lev)
                psi_owner.append(j)
        # unclaimed points above the final level but below zeta
        nxt = H[y] + gap[y]
        while nxt <= zeta[y]:
            psi_sites.append(y)
            psi_levels.append(nxt)
            psi_owner.append(-1)
            nxt += rng.exponential()

    report = CouplingReport(
        xi=xi,
        endpoints=endpoints,
        claim_levels=claim_levels,
        H=H.copy(),
        zeta=zeta,
        psi_sites=np.asarray(psi_sites, dtype=np.int64),
        psi_levels=np.asarray(psi_levels, dtype=float),
        psi_claimed_by=np.asarray(psi_owner, dtype=np.int64),
        failure_sites=np.flatnonzero(H < zeta),
    )
    logger.debug(
        "Coupling of %d particles: %d psi points, %d failure sites",
        J, report.psi_sites.size, report.failure_sites.size,
    )
    return report
