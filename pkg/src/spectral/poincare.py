"""Weak Poincare constants of balls and the good / very-good classification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from src.errors import ConfigurationError
from src.lattice.field import ConductanceField

logger = logging.getLogger(__name__)

# relative threshold below which a Dirichlet eigenvalue counts as zero
KERNEL_TOL = 1e-10


@dataclass
class PoincareProblem:
    """Variance form on B(x, r) against the Dirichlet form on B(x, C_W r).

    Both forms act on functions over the outer ball, indexed like ``outer``.
    Each edge of the outer ball enters the Dirichlet form once.
    """

    center: int
    r: int
    c_w: float
    ball: np.ndarray
    outer: np.ndarray
    variance: np.ndarray
    dirichlet: np.ndarray

    def variance_of(self, f: np.ndarray) -> float:
        return float(f @ self.variance @ f)

    def energy_of(self, f: np.ndarray) -> float:
        return float(f @ self.dirichlet @ f)

    def ratio(self, f: np.ndarray) -> float:
        """Poincare quotient Var_B(f) / (r^2 E(f)); 0 when both vanish."""
        var, energy = self.variance_of(f), self.energy_of(f)
        if energy <= 0:
            return 0.0 if var <= 1e-14 else math.inf
        return var / (self.r**2 * energy)


@dataclass
class PoincareResult:
    problem: PoincareProblem
    c_p: float
    extremal: np.ndarray | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.c_p)


def build_poincare_problem(
    field: ConductanceField, x: int, r: int, c_w: float = 2.0
) -> PoincareProblem:
    if r < 1:
        raise ValueError(f"Poincare radius must be >= 1, got {r}")
    outer_r = math.ceil(c_w * r)
    if field.box.is_torus and 2 * outer_r + 1 > field.box.side:
        raise ConfigurationError(
            f"B(x, {outer_r}) wraps around the torus of side {field.box.side}"
        )
    dist = field.distances(x, limit=outer_r)
    outer = np.flatnonzero(dist <= outer_r)
    inner = dist[outer] <= r

    A = field.adjacency[outer][:, outer].toarray()
    dirichlet = np.diag(A.sum(axis=1)) - A
    m = np.where(inner, field.mu[outer], 0.0)
    variance = np.diag(m) - np.outer(m, m) / m.sum()
    return PoincareProblem(
        center=x,
        r=r,
        c_w=c_w,
        ball=outer[inner],
        outer=outer,
        variance=variance,
        dirichlet=dirichlet,
    )


def poincare_constant(
    field: ConductanceField, x: int, r: int, c_w: float = 2.0
) -> PoincareResult:
    """Smallest C_P with Var_B(f) <= C_P r^2 E_{B(x, C_W r)}(f) for every f.

    Computed as the top generalized eigenvalue of (variance, Dirichlet) on the
    complement of the Dirichlet kernel. If a kernel function (constant on the
    components of the outer ball) has positive variance, C_P is infinite.
    """
    prob = build_poincare_problem(field, x, r, c_w)
    evals, evecs = linalg.eigh(prob.dirichlet)
    scale = max(float(evals.max()), 1.0)
    null = evals <= KERNEL_TOL * scale
    kernel = evecs[:, null]
    if kernel.size and np.abs(kernel.T @ prob.variance @ kernel).max() > KERNEL_TOL * scale:
        logger.debug("B(%d, %d) is disconnected inside its outer ball; C_P infinite", x, r)
        return PoincareResult(problem=prob, c_p=math.inf)

    W = evecs[:, ~null] / np.sqrt(evals[~null])
    reduced = W.T @ prob.variance @ W
    top_vals, top_vecs = linalg.eigh(reduced)
    c_p = max(float(top_vals[-1]), 0.0) / r**2
    return PoincareResult(problem=prob, c_p=c_p, extremal=W @ top_vecs[:, -1])


def poincare_ratio(field: ConductanceField, x: int, r: int, c_w: float, f: np.ndarray) -> float:
    return build_poincare_problem(field, x, r, c_w).ratio(np.asarray(f, dtype=float))


# --- goodness ---


@dataclass
class BallCheck:
    center: int
    r: int
    volume: float
    c_p: float
    volume_ok: bool
    poincare_ok: bool

    @property
    def good(self) -> bool:
        return self.volume_ok and self.poincare_ok


@dataclass
class GoodnessReport:
    """Sub-ball classification of B(x, R) for fixed (C_V, C_P, C_W)."""

    x: int
    R: int
    c_v: float
    c_p: float
    c_w: float
    d: int
    balls: list[BallCheck] = field(default_factory=list)

    @property
    def bad_radii(self) -> list[int]:
        return sorted({b.r for b in self.balls if not b.good})

    @property
    def n_b(self) -> int:
        """Smallest N >= 1 such that every examined sub-ball of radius >= N is good."""
        bad = self.bad_radii
        return bad[-1] + 1 if bad else 1

    @property
    def very_good(self) -> bool:
        return self.n_b <= self.R ** (1 / (self.d + 2))

    def __str__(self) -> str:
        n_bad = sum(not b.good for b in self.balls)
        return (
            f"B({self.x}, {self.R}): {len(self.balls)} sub-balls, {n_bad} bad, "
            f"N_B={self.n_b}, very good={self.very_good}"
        )


def _spread(values: np.ndarray, k: int, must: int) -> np.ndarray:
    if values.size <= k:
        return values
    picks = values[np.linspace(0, values.size - 1, k).round().astype(int)]
    return np.union1d(picks, [must]) if must in values else picks


def goodness_scan(
    field: ConductanceField,
    x: int,
    R: int,
    c_v: float,
    c_p: float,
    c_w: float = 2.0,
    max_centers: int = 16,
) -> GoodnessReport:
    """Check volume and Poincare conditions on sub-balls B(y, r) of B(x, R), 1 <= r <= R.

    Centres y range over B(x, R - r), thinned to at most ``max_centers``
    evenly spread vertices (always including x).
    """
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    d = field.box.d
    report = GoodnessReport(x=x, R=R, c_v=c_v, c_p=c_p, c_w=c_w, d=d)
    dist = field.distances(x, limit=R)
    for r in range(1, R + 1):
        centers = _spread(np.flatnonzero(dist <= R - r), max_centers, x)
        for y in centers:
            volume = field.ball_volume(int(y), r)
            cp = poincare_constant(field, int(y), r, c_w).c_p
            report.balls.append(
                BallCheck(
                    center=int(y),
                    r=r,
                    volume=volume,
                    c_p=cp,
                    volume_ok=volume >= c_v * r**d,
                    poincare_ok=cp <= c_p,
                )
            )
    logger.debug("%s", report)
    return report


@dataclass
class ScaleSurrogate:
    """Smallest grid radius from which every larger grid ball around x is very good."""

    x: int
    value: int
    censored: bool
    reports: list[GoodnessReport] = field(default_factory=list)


def scale_surrogate(
    field: ConductanceField,
    x: int,
    radii: list[int],
    c_v: float,
    c_p: float,
    c_w: float = 2.0,
    max_centers: int = 16,
) -> ScaleSurrogate:
    radii = sorted(radii)
    reports = [goodness_scan(field, x, R, c_v, c_p, c_w, max_centers) for R in radii]
    value, censored = radii[-1] + 1, True
    for R, rep in zip(reversed(radii), reversed(reports)):
        if not rep.very_good:
            break
        value, censored = R, False
    return ScaleSurrogate(x=x, value=value, censored=censored, reports=reports)


def surrogate_tail(values: list[int] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Empirical P[S >= n] for n = 1 .. max(S)."""
    values = np.asarray(values)
    ns = np.arange(1, int(values.max()) + 1)
    return ns, np.array([np.mean(values >= n) for n in ns])
