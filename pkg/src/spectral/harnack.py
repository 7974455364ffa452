"""Parabolic Harnack constants and oscillation decay on space-time cylinders."""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from src.lattice.field import ConductanceField
from src.spectral.heat_kernel import DEFAULT_TOL, heat_kernel_series

logger = logging.getLogger(__name__)

TIME_POINTS = 64
C_H_FLOOR = 1 + 1e-9

# u(times) -> array (len(times), N)
Caloric = Callable[[np.ndarray], np.ndarray]


class CylinderPart(str, enum.Enum):
    FULL = "Q"
    EARLY = "Q-"
    LATE = "Q+"


@dataclass(frozen=True)
class SpaceTimeCylinder:
    """B(x, R) x [0, T] shifted by ``offset``, or its early / late sub-cylinder."""

    center: int
    R: float
    T: float
    part: CylinderPart = CylinderPart.FULL
    offset: float = 0.0

    @property
    def radius(self) -> float:
        return self.R if self.part == CylinderPart.FULL else self.R / 2

    @property
    def interval(self) -> tuple[float, float]:
        lo, hi = {
            CylinderPart.FULL: (0.0, 1.0),
            CylinderPart.EARLY: (0.25, 0.5),
            CylinderPart.LATE: (0.75, 1.0),
        }[self.part]
        return self.offset + lo * self.T, self.offset + hi * self.T

    def sub(self, part: CylinderPart) -> SpaceTimeCylinder:
        return SpaceTimeCylinder(self.center, self.R, self.T, part, self.offset)

    def vertices(self, field: ConductanceField) -> np.ndarray:
        limit = math.floor(self.radius)
        return np.flatnonzero(field.distances(self.center, limit=limit) <= limit)

    def times(self, n: int = TIME_POINTS) -> np.ndarray:
        return np.linspace(*self.interval, n)


def theta(c_h: float) -> float:
    """Exponent log2(C_H / (C_H - 1)), with C_H clamped just above 1."""
    c_h = max(c_h, C_H_FLOOR)
    return math.log2(c_h / (c_h - 1))


def heat_caloric(
    field: ConductanceField, source: int, offset: float = 0.0, tol: float = DEFAULT_TOL
) -> Caloric:
    """u(t, y) = q_{t + offset}(source, y)."""

    def u(times: np.ndarray) -> np.ndarray:
        tables = heat_kernel_series(field, np.asarray(times) + offset, [source], tol)
        return np.stack([tb.values[0] for tb in tables])

    return u


@dataclass
class HarnackEstimate:
    """Lower estimate of C_H from a finite caloric family."""

    x: int
    R: float
    c_h: float
    ratios: dict[int, float] = field(default_factory=dict)
    skipped: list[int] = field(default_factory=list)

    @property
    def theta(self) -> float:
        return theta(self.c_h)

    def __str__(self) -> str:
        return (
            f"C_H >= {self.c_h:.4f} (Theta={self.theta:.4f}) over {len(self.ratios)} sources, "
            f"{len(self.skipped)} skipped"
        )


def source_family(
    field: ConductanceField, x: int, radius: int, stride: int
) -> np.ndarray:
    """Non-isolated vertices within ``radius`` of x on the sublattice x + stride Z^d."""
    dist = field.distances(x, limit=radius)
    near = np.flatnonzero(dist <= radius)
    offsets = field.box.delta(field.box.coords(x), field.box.coords(near))
    on_grid = np.all(offsets % stride == 0, axis=1)
    family = near[on_grid]
    return family[field.mu[family] > 0]


def harnack_constant(
    field: ConductanceField,
    x: int,
    R: int,
    T: float | None = None,
    source_radius: int | None = None,
    stride: int | None = None,
    n_time: int = TIME_POINTS,
    tol: float = DEFAULT_TOL,
) -> HarnackEstimate:
    """max over heat kernels u from a source family of sup_{Q-} u / inf_{Q+} u."""
    T = float(R * R) if T is None else T
    source_radius = R if source_radius is None else source_radius
    stride = max(1, R // 4) if stride is None else stride
    cyl = SpaceTimeCylinder(center=x, R=R, T=T)
    early, late = cyl.sub(CylinderPart.EARLY), cyl.sub(CylinderPart.LATE)
    verts = early.vertices(field)
    t_early, t_late = early.times(n_time), late.times(n_time)
    times = np.concatenate((t_early, t_late))

    sources = source_family(field, x, source_radius, stride)
    tables = heat_kernel_series(field, times, sources, tol)
    values = np.stack([tb.values[:, verts] for tb in tables])  # (time, source, vertex)
    sup_early = values[:n_time].max(axis=(0, 2))
    inf_late = values[n_time:].min(axis=(0, 2))

    est = HarnackEstimate(x=x, R=R, c_h=1.0)
    for z, hi, lo in zip(sources, sup_early, inf_late):
        if lo <= 0:
            logger.warning("Source %d: inf over Q+ is 0, skipped", z)
            est.skipped.append(int(z))
            continue
        est.ratios[int(z)] = float(hi / lo)
    if est.ratios:
        est.c_h = max(max(est.ratios.values()), C_H_FLOOR)
    logger.info("%s", est)
    return est


@dataclass
class OscillationReport:
    scales: list[int]
    osc_full: list[float]
    osc_late: list[float]
    c_h: float | None = None

    @property
    def ratios(self) -> list[float]:
        return [late / full if full > 0 else 0.0 for full, late in zip(self.osc_full, self.osc_late)]

    @property
    def bound(self) -> float | None:
        return None if self.c_h is None else 1 - 1 / max(self.c_h, C_H_FLOOR)

    def passes(self, slack: float = 0.05) -> bool:
        if self.bound is None:
            return all(r <= 1 for r in self.ratios)
        return all(r <= self.bound + slack for r in self.ratios)


def oscillation_decay_check(
    field: ConductanceField,
    x: int,
    r0: int,
    u: Caloric | None = None,
    c_h: float | None = None,
    n_time: int = TIME_POINTS,
) -> OscillationReport:
    """Osc(u, Q_+(k)) / Osc(u, Q(k)) on dyadic scales r_k = r0 / 2^k >= 2.

    Q(k) is B(x, r_k) x [r0^2 - r_k^2, r0^2] and Q_+(k) its late part
    B(x, r_k / 2) x [r0^2 - r_k^2 / 4, r0^2]. The default u is the heat kernel
    from x delayed by r0^2.
    """
    if r0 < 2:
        raise ValueError(f"r0 must be >= 2, got {r0}")
    u = heat_caloric(field, x, offset=float(r0 * r0)) if u is None else u
    scales = []
    r = r0
    while r >= 2:
        scales.append(r)
        r //= 2
    end = float(r0 * r0)

    grids = []
    for rk in scales:
        late = np.linspace(end - rk * rk / 4, end, n_time)
        full = np.union1d(np.linspace(end - rk * rk, end, n_time), late)
        grids.append((full, late))
    all_times = np.unique(np.concatenate([g[0] for g in grids]))
    values = u(all_times)

    dist = field.distances(x, limit=r0)
    report = OscillationReport(scales=scales, osc_full=[], osc_late=[], c_h=c_h)
    for rk, (full, late) in zip(scales, grids):
        for times, radius, target in (
            (full, rk, report.osc_full),
            (late, rk // 2, report.osc_late),
        ):
            rows = np.searchsorted(all_times, times)
            block = values[np.ix_(rows, np.flatnonzero(dist <= radius))]
            target.append(float(block.max() - block.min()))
    return report
