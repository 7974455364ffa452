"""Conductance fields on a finite box: sampling, vertex weights, balls and volumes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from src.errors import ConfigurationError
from src.lattice.models import P_C, LatticeBox, LawKind, LawSpec

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ConductanceField:
    """Symmetric edge weights on a LatticeBox.

    ``weights[a, x]`` is the conductance of the edge {x, x + e_a}. Slot ``s`` of
    the per-vertex tables points along axis ``s // 2``, in the positive
    direction when ``s`` is even. Absent edges (past a hard wall) have weight 0
    and point back at the vertex itself.
    """

    box: LatticeBox
    weights: np.ndarray
    c_m: float
    law: LawKind
    seed: int | None = None
    law_spec: LawSpec | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        expected = (self.box.d, self.box.n_vertices)
        if self.weights.shape != expected:
            raise ValueError(f"weights must have shape {expected}, got {self.weights.shape}")
        self.weights = np.ascontiguousarray(self.weights, dtype=float)
        self.weights.setflags(write=False)

    # --- construction ---

    @classmethod
    def from_weights(
        cls, box: LatticeBox, weights: np.ndarray, c_m: float = 2.0
    ) -> ConductanceField:
        """Explicit field; weights on absent hard-wall edges are forced to zero."""
        w = np.array(weights, dtype=float).reshape(box.d, box.n_vertices)
        if np.any(w < 0):
            raise ValueError("Conductances must be nonnegative")
        w[~_edge_present(box)] = 0.0
        positive = w[w > 0]
        if positive.size and (positive.min() < 1 / c_m - 1e-12 or positive.max() > c_m + 1e-12):
            raise ConfigurationError(
                f"Explicit weights outside [1/C_M, C_M] = [{1 / c_m:g}, {c_m:g}]"
            )
        return cls(box=box, weights=w, c_m=c_m, law=LawKind.EXPLICIT)

    # --- per-vertex tables ---

    @cached_property
    def present(self) -> np.ndarray:
        """(N, 2d) mask of slots that correspond to edges of the box."""
        fwd = _edge_present(self.box)
        coords = self.box.coords(np.arange(self.box.n_vertices))
        out = np.empty((self.box.n_vertices, 2 * self.box.d), dtype=bool)
        for a in range(self.box.d):
            out[:, 2 * a] = fwd[a]
            out[:, 2 * a + 1] = True if self.box.is_torus else coords[:, a] > 0
        return out

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(N, 2d) neighbor index per slot (the vertex itself for absent slots)."""
        n = self.box.n_vertices
        coords = self.box.coords(np.arange(n))
        out = np.empty((n, 2 * self.box.d), dtype=np.int64)
        for s in range(2 * self.box.d):
            step = np.zeros(self.box.d, dtype=np.int64)
            step[s // 2] = 1 if s % 2 == 0 else -1
            target = coords + step
            ok = self.present[:, s]
            out[:, s] = np.arange(n)
            out[ok, s] = self.box.index(target[ok])
        return out

    @cached_property
    def conductances(self) -> np.ndarray:
        """(N, 2d) weight of the edge behind each slot."""
        out = np.zeros((self.box.n_vertices, 2 * self.box.d))
        for a in range(self.box.d):
            out[:, 2 * a] = self.weights[a]
            back = self.neighbors[:, 2 * a + 1]
            out[:, 2 * a + 1] = np.where(self.present[:, 2 * a + 1], self.weights[a, back], 0.0)
        return out

    @cached_property
    def mu(self) -> np.ndarray:
        """Vertex weights mu_x = sum of incident conductances."""
        return self.conductances.sum(axis=1)

    @cached_property
    def jump_cdf(self) -> np.ndarray:
        """Cumulative slot probabilities mu_xy / mu_x; rows of isolated vertices are zero."""
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = np.where(self.mu[:, None] > 0, self.conductances / self.mu[:, None], 0.0)
        cdf = np.cumsum(probs, axis=1)
        cdf[self.mu > 0, -1] = 1.0
        return cdf

    @cached_property
    def slot_steps(self) -> np.ndarray:
        """(2d, d) unit displacement of each slot."""
        steps = np.zeros((2 * self.box.d, self.box.d), dtype=np.int64)
        for s in range(2 * self.box.d):
            steps[s, s // 2] = 1 if s % 2 == 0 else -1
        return steps

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse matrix of conductances between distinct vertices."""
        n = self.box.n_vertices
        rows = np.repeat(np.arange(n), 2 * self.box.d)
        cols = self.neighbors.ravel()
        vals = self.conductances.ravel()
        keep = (vals > 0) & (rows != cols)
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))

    # --- queries ---

    def vertex_weight(self, x: int) -> float:
        return float(self.mu[x])

    def is_isolated(self, x: int) -> bool:
        return bool(self.mu[x] == 0)

    def distances(self, x: int | np.ndarray, limit: float = np.inf) -> np.ndarray:
        """Graph distance through positive-weight edges; inf beyond ``limit``."""
        return csgraph.dijkstra(self.adjacency, indices=x, unweighted=True, limit=limit)

    def ball(self, x: int, r: int) -> np.ndarray:
        """Sorted vertices at graph distance <= r from x."""
        if r < 0:
            raise ValueError(f"Ball radius must be >= 0, got {r}")
        return np.flatnonzero(self.distances(x, limit=r) <= r)

    def ball_volume(self, x: int, r: int) -> float:
        if r < 1:
            raise ValueError(f"Ball volume needs r >= 1, got {r}")
        return float(self.mu[self.ball(x, r)].sum())

    def zero_fraction(self) -> float:
        """Fraction of present edges with zero conductance."""
        present = _edge_present(self.box)
        return float(np.mean(self.weights[present] == 0))

    def check_ellipticity(self) -> bool:
        positive = self.weights[self.weights > 0]
        return bool(np.all((positive >= 1 / self.c_m - 1e-12) & (positive <= self.c_m + 1e-12)))


def _edge_present(box: LatticeBox) -> np.ndarray:
    """(d, N) mask of forward edges {x, x + e_a} that exist in the box."""
    if box.is_torus:
        return np.ones((box.d, box.n_vertices), dtype=bool)
    coords = box.coords(np.arange(box.n_vertices))
    return (coords < box.side - 1).T


def sample_conductances(box: LatticeBox, law: LawSpec, seed: int) -> ConductanceField:
    """Sample i.i.d. edge weights; the same seed gives a bit-identical field."""
    if law.kind == LawKind.EXPLICIT:
        raise ConfigurationError("Explicit fields are built with ConductanceField.from_weights")
    if law.kind == LawKind.DILUTE:
        p_c = P_C.get(box.d)
        if box.d == 2 and law.p0 >= p_c:
            raise ConfigurationError(
                f"Dilute law needs p0 < p_c = {p_c} in d=2, got p0={law.p0}"
            )
        if p_c is not None and box.d >= 3 and law.p0 >= p_c:
            logger.warning(
                "p0=%.4f is at or above the bond threshold %.4f for d=%d", law.p0, p_c, box.d
            )

    rng = np.random.default_rng(seed)
    shape = (box.d, box.n_vertices)
    if law.kind == LawKind.CONSTANT:
        if not 1 / law.c_m <= law.value <= law.c_m:
            raise ConfigurationError(f"Constant {law.value} outside [1/C_M, C_M]")
        weights = np.full(shape, law.value)
    else:
        weights = rng.uniform(1 / law.c_m, law.c_m, size=shape)
        if law.kind == LawKind.DILUTE:
            weights[rng.random(shape) < law.p0] = 0.0
    weights[~_edge_present(box)] = 0.0

    logger.debug("Sampled %s on %s (seed=%d)", law.describe(), box, seed)
    return ConductanceField(
        box=box, weights=weights, c_m=law.c_m, law=law.kind, seed=seed, law_spec=law
    )


def vertex_weight(field: ConductanceField, x: int) -> float:
    return field.vertex_weight(x)


def ball(field: ConductanceField, x: int, r: int) -> np.ndarray:
    return field.ball(x, r)


def ball_volume(field: ConductanceField, x: int, r: int) -> float:
    return field.ball_volume(x, r)


@dataclass
class VolumeReport:
    """Outcome of checking mu(B(x, r)) <= C_U r^d over sampled centres and radii."""

    fitted_c_u: float
    argmax: tuple[int, int]
    radii: list[int]
    n_centers: int
    c_u: float | None = None
    violations: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        x, r = self.argmax
        line = f"fitted C_U={self.fitted_c_u:.4f} at x={x}, r={r} over {self.n_centers} centres"
        if self.c_u is not None:
            line += f"; {len(self.violations)} violations of C_U={self.c_u:g}"
        return line


def check_volume_bound(
    field: ConductanceField,
    c_u: float | None = None,
    radii: range | list[int] = range(1, 9),
    centers: np.ndarray | None = None,
) -> VolumeReport:
    """Smallest C_U with mu(B(x, r)) <= C_U r^d over all (x, r) examined."""
    radii = list(radii)
    if min(radii) < 1:
        raise ValueError("Volume bound radii must be >= 1")
    if centers is None:
        centers = np.arange(field.box.n_vertices)
    centers = np.asarray(centers)
    dist = np.atleast_2d(field.distances(centers, limit=max(radii)))

    best, argmax = -np.inf, (int(centers[0]), radii[0])
    violations: list[tuple[int, int, float]] = []
    for r in radii:
        volumes = (dist <= r) @ field.mu
        ratios = volumes / r**field.box.d
        i = int(np.argmax(ratios))
        if ratios[i] > best:
            best, argmax = float(ratios[i]), (int(centers[i]), r)
        if c_u is not None:
            for j in np.flatnonzero(ratios > c_u):
                violations.append((int(centers[j]), r, float(volumes[j])))
    return VolumeReport(
        fitted_c_u=best,
        argmax=argmax,
        radii=radii,
        n_centers=len(centers),
        c_u=c_u,
        violations=violations,
    )
