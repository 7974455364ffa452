"""Monte Carlo evaluation of the space-time cell events.

Cube ``i`` of side ``ell`` sits at ``origin + i * ell``. Its super cube Q*
spans offsets [-eta, eta + 1) in units of ell, and the tagged particle's
confinement region spans [-eta + 1, eta). A collided particle is a
background particle that shares a vertex with the tagged particle during
[0, T], T = ell^(5/3).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.epidemic.models import CellEventReport, CellEventSpec, CellRep
from src.errors import ConfigurationError
from src.lattice.field import ConductanceField
from src.utils.seeds import derive_seed
from src.utils.stats import LinearFit, Proportion, linear_fit, wilson_interval
from src.walk.ensemble import (
    DEFAULT_ACCEPTANCE_FLOOR,
    JumpBatch,
    Segments,
    advance,
    advance_confined,
    segments,
)

logger = logging.getLogger(__name__)

# Upper bound on simulated jump records held in memory at once.
JUMP_BUDGET = 5_000_000


@dataclass(frozen=True)
class CellGeometry:
    field: ConductanceField
    ell: int
    eta: int
    cube: tuple[int, ...]

    @classmethod
    def build(
        cls, field: ConductanceField, ell: int, eta: int, cube: tuple[int, ...] | None = None
    ) -> CellGeometry:
        box = field.box
        cube = (0,) * box.d if cube is None else tuple(int(c) for c in cube)
        if len(cube) != box.d:
            raise ConfigurationError(f"Cube index {cube} does not have {box.d} coordinates")
        if eta < 1:
            raise ConfigurationError(f"eta must be >= 1, got {eta}")
        geom = cls(field=field, ell=ell, eta=eta, cube=cube)
        if not box.cube_fits(geom.super_lower, geom.super_side):
            raise ConfigurationError(
                f"Super cube of side {geom.super_side} around cube {cube} does not fit "
                f"in a box of side {box.side}"
            )
        return geom

    @property
    def base(self) -> np.ndarray:
        return self.field.box.origin_coords + self.ell * np.asarray(self.cube, dtype=np.int64)

    @property
    def super_lower(self) -> np.ndarray:
        return self.base - self.eta * self.ell

    @property
    def super_side(self) -> int:
        return (2 * self.eta + 1) * self.ell

    def _mask(self, lower, side: int) -> np.ndarray:
        mask = np.zeros(self.field.box.n_vertices, dtype=bool)
        mask[self.field.box.cube(lower, side)] = True
        return mask

    def center_vertices(self) -> np.ndarray:
        return self.field.box.cube(self.base, self.ell)

    def super_mask(self) -> np.ndarray:
        return self._mask(self.super_lower, self.super_side)

    def inner_mask(self) -> np.ndarray:
        return self._mask(self.base - (self.eta - 1) * self.ell, (2 * self.eta - 1) * self.ell)

    def target_vertices(self, z) -> np.ndarray:
        return self.field.box.cube(self.base + self.ell * np.asarray(z), self.ell)

    def offsets(self, vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cube offsets z of vertices relative to cube i, and whether they lie in Q*."""
        box = self.field.box
        rel = box.coords(vertices) - self.super_lower
        if box.is_torus:
            rel = np.mod(rel, box.side)
        inside = np.all((rel >= 0) & (rel < self.super_side), axis=-1)
        return rel // self.ell - self.eta, inside

    def covered(self, vertices: np.ndarray) -> int:
        """Number of the (2 eta + 1)^d cubes of Q* holding at least one vertex."""
        z, inside = self.offsets(vertices)
        if not inside.any():
            return 0
        return int(np.unique(z[inside], axis=0).shape[0])

    @property
    def n_cubes(self) -> int:
        return (2 * self.eta + 1) ** self.field.box.d


def _left_region(seg: Segments, region: np.ndarray, n_walkers: int, until: float) -> np.ndarray:
    bad = ~region[seg.vertex] & (seg.start < until)
    return np.bincount(seg.walker[bad], minlength=n_walkers) > 0


def first_contact(tagged: Segments, seg: Segments, n_walkers: int, until: float) -> np.ndarray:
    """Per walker, the first time it shares a vertex with the tagged path before ``until``."""
    first = np.full(n_walkers, np.inf)
    if not len(seg) or not len(tagged):
        return first
    order = np.argsort(tagged.vertex, kind="stable")
    tv = tagged.vertex[order]
    lo = np.searchsorted(tv, seg.vertex, side="left")
    cnt = np.searchsorted(tv, seg.vertex, side="right") - lo
    total = int(cnt.sum())
    if not total:
        return first
    rep = np.repeat(np.arange(len(seg)), cnt)
    within = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    tidx = order[np.repeat(lo, cnt) + within]
    a = np.maximum(seg.start[rep], tagged.start[tidx])
    b = np.minimum(np.minimum(seg.end[rep], tagged.end[tidx]), until)
    ok = a < b
    np.minimum.at(first, seg.walker[rep[ok]], a[ok])
    return first


def _tagged_start(geom: CellGeometry, rng: np.random.Generator) -> int:
    cube = geom.center_vertices()
    cube = cube[geom.field.mu[cube] > 0]
    if not cube.size:
        raise ConfigurationError(f"Cube {geom.cube} has no non-isolated vertex")
    return int(rng.choice(cube))


def _background(
    geom: CellGeometry, intensity: float, exclude: int, rng: np.random.Generator
) -> np.ndarray:
    """Poisson(intensity * mu_x) particles on Q*, none on the excluded vertex."""
    region = np.flatnonzero(geom.super_mask())
    region = region[region != exclude]
    counts = rng.poisson(intensity * geom.field.mu[region])
    return np.repeat(region, counts)


def _chunks(n: int, duration: float):
    size = max(1, int(JUMP_BUDGET / max(duration, 1.0)))
    for lo in range(0, n, size):
        yield slice(lo, min(n, lo + size))


def _move(
    field: ConductanceField,
    starts: np.ndarray,
    duration: float,
    rng: np.random.Generator,
    rho: float | None,
    floor: float,
) -> JumpBatch:
    if rho is None:
        return advance(field, starts, duration, rng)
    return advance_confined(field, starts, duration, rng, rho=rho, floor=floor).batch


@dataclass
class CollisionCensus:
    count: int
    n_background: int
    tagged_start: int
    tagged_acceptance: float


def collision_census(
    field: ConductanceField,
    spec: CellEventSpec,
    seed: int | np.random.Generator = 0,
    cube: tuple[int, ...] | None = None,
    floor: float = DEFAULT_ACCEPTANCE_FLOOR,
) -> CollisionCensus:
    """Count background particles that stay in Q* and meet the confined tagged particle.

    The tagged particle is conditioned by rejection to stay in the inner
    region during [0, T]; the background is Poisson(lambda0 mu_x / 2) on Q*.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    geom = CellGeometry.build(field, spec.ell, spec.eta, cube)
    T = spec.T
    x0 = _tagged_start(geom, rng)
    tagged = advance_confined(field, [x0], T, rng, region=geom.inner_mask(), floor=floor)
    tseg = segments(tagged.batch)

    starts = _background(geom, spec.lambda0 / 2, x0, rng)
    qstar = geom.super_mask()
    count = 0
    for part in _chunks(starts.size, T):
        batch = advance(field, starts[part], T, rng)
        seg = segments(batch)
        n = batch.n_walkers
        met = np.isfinite(first_contact(tseg, seg, n, T))
        count += int((met & ~_left_region(seg, qstar, n, T)).sum())
    logger.debug("Collision census at ell=%d: %d of %d particles", spec.ell, count, starts.size)
    return CollisionCensus(
        count=count,
        n_background=int(starts.size),
        tagged_start=x0,
        tagged_acceptance=tagged.acceptance,
    )


@dataclass
class CollisionScan:
    ells: list[int] = field(default_factory=list)
    means: list[float] = field(default_factory=list)
    counts: list[list[int]] = field(default_factory=list)
    fit: LinearFit | None = None

    @property
    def exponent(self) -> float:
        return self.fit.slope if self.fit else float("nan")


def fit_collision_exponent(ells, means) -> LinearFit:
    """Slope of log mean collision count against log ell."""
    ells = np.asarray(ells, dtype=float)
    means = np.asarray(means, dtype=float)
    keep = means > 0
    return linear_fit(np.log(ells[keep]), np.log(means[keep]))


def collision_scan(
    field: ConductanceField,
    spec: CellEventSpec,
    ells: list[int],
    reps: int,
    seed: int,
) -> CollisionScan:
    scan = CollisionScan()
    for ell in ells:
        sub = spec.model_copy(update={"ell": ell, "beta_time": spec.beta_ratio * ell**2})
        counts = [
            collision_census(field, sub, derive_seed(seed, f"collision-{ell}", i)).count
            for i in range(reps)
        ]
        scan.ells.append(int(ell))
        scan.counts.append(counts)
        scan.means.append(float(np.mean(counts)) if counts else 0.0)
        logger.info("ell=%d: mean collisions %.3f over %d reps", ell, scan.means[-1], reps)
    if sum(m > 0 for m in scan.means) >= 2:
        scan.fit = fit_collision_exponent(scan.ells, scan.means)
    return scan


class SpreadPlacement(str, enum.Enum):
    UNIFORM = "uniform"
    CORNER = "corner"


@dataclass
class SpreadEstimate:
    N: int
    z: tuple[int, ...]
    estimate: Proportion

    @property
    def failure(self) -> float:
        return 1.0 - self.estimate.value


def spread_probability(
    field: ConductanceField,
    N: int,
    ell: int,
    eta: int,
    beta_time: float,
    z,
    reps: int,
    seed: int | np.random.Generator = 0,
    placement: SpreadPlacement | str = SpreadPlacement.UNIFORM,
    cube: tuple[int, ...] | None = None,
    collision_time: float | None = None,
) -> SpreadEstimate:
    """Frequency that some of N particles, started in Q* at time T, ends in cube i + z at beta_time.

    T is the collision window of the matching cell spec, ell^(5/3) unless
    ``collision_time`` overrides it.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    geom = CellGeometry.build(field, ell, eta, cube)
    z = tuple(int(c) for c in z)
    if len(z) != field.box.d or any(abs(c) > eta for c in z):
        raise ConfigurationError(f"Offset {z} is not in {{-{eta}..{eta}}}^{field.box.d}")
    spec = CellEventSpec(ell=ell, eta=eta, beta_time=beta_time, collision_time=collision_time)
    spec.require_valid()
    T = spec.T
    if N == 0 or reps == 0:
        return SpreadEstimate(N=N, z=z, estimate=wilson_interval(0, reps))

    try:
        placement = SpreadPlacement(placement)
    except ValueError as e:
        raise ConfigurationError(f"Unknown placement {placement!r}") from e
    if placement == SpreadPlacement.CORNER:
        corner = tuple(-eta if c >= 0 else eta for c in z)
        pool = geom.target_vertices(corner)
    else:
        pool = np.flatnonzero(geom.super_mask())
    pool = pool[field.mu[pool] > 0]
    target = np.zeros(field.box.n_vertices, dtype=bool)
    target[geom.target_vertices(z)] = True

    starts = rng.choice(pool, size=N * reps)
    hits = np.zeros(N * reps, dtype=bool)
    for part in _chunks(starts.size, beta_time - T):
        batch = advance(field, starts[part], beta_time - T, rng, t0=T)
        hits[part] = target[batch.final]
    successes = int(hits.reshape(reps, N).any(axis=1).sum())
    return SpreadEstimate(N=N, z=z, estimate=wilson_interval(successes, reps))


@dataclass
class SpreadFit:
    Ns: list[int]
    failures: list[float]
    fit: LinearFit | None

    @property
    def c_p(self) -> float:
        return -self.fit.slope if self.fit else float("nan")


def fit_spread_rate(estimates: list[SpreadEstimate]) -> SpreadFit:
    """Fit failure ~ exp(-N c_p) on the estimates with a positive failure frequency."""
    Ns = [e.N for e in estimates]
    failures = [e.failure for e in estimates]
    pts = [(n, f) for n, f in zip(Ns, failures) if f > 0]
    fit = linear_fit([p[0] for p in pts], np.log([p[1] for p in pts])) if len(pts) >= 2 else None
    return SpreadFit(Ns=Ns, failures=failures, fit=fit)


def cell_event_lower_bound(lambda0: float, ell: int, C: float) -> float:
    """1 - exp(-C lambda0 ell^{1/3})."""
    return 1.0 - math.exp(-C * lambda0 * ell ** (1 / 3))


def spread_lower_bound(N: int, c_p: float) -> float:
    """1 - exp(-N c_p)."""
    return 1.0 - math.exp(-N * c_p)


def _cell_rep(
    geom: CellGeometry,
    spec: CellEventSpec,
    rng: np.random.Generator,
    recovery_rng: np.random.Generator | None,
    intensity: float,
    rho: float | None,
    floor: float,
) -> CellRep:
    """One sample of the cell event.

    Unconfined motion is simulated in two stages: everyone over [0, T], then
    only the collided particles up to beta_time. Confined motion conditions
    whole paths over [0, beta_time], so it is simulated in one go.
    """
    fld = geom.field
    T, B = spec.T, float(spec.beta_time)
    horizon = T if rho is None else B
    x0 = _tagged_start(geom, rng)

    tagged = _move(fld, np.array([x0]), horizon, rng, rho, floor)
    tseg = segments(tagged)
    f1 = not bool(_left_region(tseg, geom.inner_mask(), 1, T)[0])
    tagged_recovered = False
    if recovery_rng is not None:
        tagged_recovered = bool(recovery_rng.exponential(1 / spec.gamma) < B)

    starts = _background(geom, intensity, x0, rng)
    qstar = geom.super_mask()
    survivors = 0
    at_T: list[np.ndarray] = []
    for part in _chunks(starts.size, horizon):
        batch = _move(fld, starts[part], horizon, rng, rho, floor)
        seg = segments(batch)
        n = batch.n_walkers
        met = np.isfinite(first_contact(tseg, seg, n, T))
        if recovery_rng is not None:
            met &= recovery_rng.exponential(1 / spec.gamma, size=n) >= B
        survivors += int((met & ~_left_region(seg, qstar, n, T)).sum())
        at_T.append(batch.final[met])

    collided = np.concatenate(at_T) if at_T else np.empty(0, dtype=np.int64)
    if rho is None and collided.size:
        collided = advance(fld, collided, B - T, rng, t0=T).final
    f2 = survivors >= spec.collision_threshold
    f3 = geom.covered(collided) == geom.n_cubes
    return CellRep(
        e_st=f3 and not tagged_recovered,
        f1=f1,
        f2=f2,
        f3=f3,
        collided=int(collided.size),
        recovered=tagged_recovered,
    )


def estimate_cell_event(
    field: ConductanceField,
    spec: CellEventSpec,
    reps: int,
    seed: int,
    cube: tuple[int, ...] | None = None,
    recovery: bool | None = None,
    floor: float = DEFAULT_ACCEPTANCE_FLOOR,
) -> CellEventReport:
    """Empirical probability of the cell event with unconfined motion.

    In recovery mode (default: when spec.gamma > 0) the tagged particle must
    not recover during the cell and recovering particles do not count as
    collided.
    """
    spec.require_valid()
    geom = CellGeometry.build(field, spec.ell, spec.eta, cube)
    recovery = spec.gamma > 0 if recovery is None else recovery
    if recovery and spec.gamma <= 0:
        raise ConfigurationError("Recovery mode needs gamma > 0")
    report = CellEventReport(spec=spec, mode="recovery" if recovery else "cell")
    for i in range(reps):
        move_ss, recovery_ss = np.random.SeedSequence(derive_seed(seed, "cell", i)).spawn(2)
        report.reps.append(
            _cell_rep(
                geom,
                spec,
                np.random.default_rng(move_ss),
                np.random.default_rng(recovery_ss) if recovery else None,
                spec.lambda0 / 2,
                None,
                floor,
            )
        )
    logger.info("%s over %d reps (ell=%d, lambda0=%g)", report, reps, spec.ell, spec.lambda0)
    return report


def estimate_nu(
    field: ConductanceField,
    spec: CellEventSpec,
    eps: float,
    reps: int,
    seed: int,
    cube: tuple[int, ...] | None = None,
    floor: float = DEFAULT_ACCEPTANCE_FLOOR,
) -> CellEventReport:
    """Cell event probability under the associated setup.

    Particles are Poisson((1 - eps) lambda0 mu_x) on Q* and every path keeps
    its displacement within Q_{w ell} (no confinement when spec.w is None).
    """
    if not 0 <= eps <= 1:
        raise ConfigurationError(f"eps must be in [0, 1], got {eps}")
    spec.require_valid()
    geom = CellGeometry.build(field, spec.ell, spec.eta, cube)
    rho = None if spec.w is None else spec.w * spec.ell
    report = CellEventReport(spec=spec, mode=f"nu(eps={eps:g})")
    for i in range(reps):
        rng = np.random.default_rng(derive_seed(seed, "nu", i))
        report.reps.append(
            _cell_rep(geom, spec, rng, None, (1 - eps) * spec.lambda0, rho, floor)
        )
    logger.info("%s over %d reps", report, reps)
    return report
