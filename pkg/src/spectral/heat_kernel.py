"""Exact heat kernels by uniformization.

Every vertex jumps at total rate 1, so the transition matrix is
p_t = e^{-t} sum_k t^k / k! P^k with P the jump matrix. The series is cut where
the Poisson(t) tail drops below ``tol``, which bounds the truncation error of
every entry. Heat kernels are q_t(x, y) = p_t(x, y) / mu_y.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy import linalg, stats

from src.errors import ConfigurationError
from src.lattice.field import ConductanceField

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
# Poisson weights below this contribute nothing representable
NEGLIGIBLE_WEIGHT = 1e-300


def jump_matrix(field: ConductanceField) -> sp.csr_matrix:
    """P[x, y] = mu_xy / mu_x; isolated vertices hold still (P[x, x] = 1)."""
    mu = field.mu
    inv = np.divide(1.0, mu, out=np.zeros_like(mu), where=mu > 0)
    P = sp.diags(inv) @ field.adjacency
    return (P + sp.diags((mu == 0).astype(float))).tocsr()


def generator(field: ConductanceField) -> sp.csr_matrix:
    return (jump_matrix(field) - sp.identity(field.box.n_vertices)).tocsr()


def apply_generator(field: ConductanceField, f: np.ndarray) -> np.ndarray:
    """(L f)(x) = sum_y mu_xy / mu_x (f(y) - f(x)), along the last axis of f."""
    f = np.asarray(f, dtype=float)
    P = jump_matrix(field)
    return (P @ f.T).T - f


def truncation_point(t: float, tol: float) -> int:
    """Smallest K with P[Poisson(t) > K] <= tol."""
    if t == 0:
        return 0
    return int(stats.poisson.isf(tol, t)) + 1


def uniformize(
    field: ConductanceField,
    initial: np.ndarray,
    times: list[float] | np.ndarray,
    tol: float = DEFAULT_TOL,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate row distributions ``initial`` (S, N) to each time.

    With ``mask`` (S, N), mass stepping outside the row's mask is killed, which
    gives the sub-probability kernel of the walk absorbed on leaving.
    Returns values of shape (len(times), S, N) and the per-time truncation bound.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError(f"Times must be >= 0, got {times.min()}")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    K = max(truncation_point(float(t), tol) for t in times)
    ks = np.arange(K + 1)
    weights = np.stack(
        [stats.poisson.pmf(ks, t) if t > 0 else (ks == 0).astype(float) for t in times]
    )
    errors = np.array([stats.poisson.sf(K, t) if t > 0 else 0.0 for t in times])

    PT = jump_matrix(field).T.tocsr()
    W = np.array(initial, dtype=float).T.copy()
    keep = None if mask is None else np.asarray(mask, dtype=bool).T
    if keep is not None:
        W *= keep
    acc = np.zeros((times.size,) + W.shape)
    for k in range(K + 1):
        live = np.flatnonzero(weights[:, k] > NEGLIGIBLE_WEIGHT)
        for i in live:
            acc[i] += weights[i, k] * W
        if k < K:
            W = PT @ W
            if keep is not None:
                W *= keep
    logger.debug("Uniformized %d rows to %d times with %d terms", W.shape[1], times.size, K + 1)
    return np.transpose(acc, (0, 2, 1)), errors


@dataclass
class HeatKernelTable:
    """q_t(x, y) for the sources x and every vertex y."""

    field: ConductanceField
    t: float
    sources: np.ndarray
    values: np.ndarray
    truncation_error: float
    tol: float = DEFAULT_TOL

    @property
    def p(self) -> np.ndarray:
        """Transition probabilities p_t(x, y) = q_t(x, y) mu_y."""
        return self.values * self.field.mu

    def row_of(self, x: int) -> int:
        hits = np.flatnonzero(self.sources == x)
        if not hits.size:
            raise KeyError(f"Vertex {x} is not a source of this table")
        return int(hits[0])

    def q(self, x: int, y: int) -> float:
        return float(self.values[self.row_of(x), y])

    def row(self, x: int) -> np.ndarray:
        return self.values[self.row_of(x)]

    def mass(self) -> np.ndarray:
        """sum_y q_t(x, y) mu_y per source."""
        return self.p.sum(axis=1)

    def symmetry_error(self) -> float:
        """max |q_t(x, y) - q_t(y, x)| over pairs of sources."""
        block = self.values[:, self.sources]
        return float(np.abs(block - block.T).max()) if block.size else 0.0

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["source", "vertex", "value"])
            for i, x in enumerate(self.sources):
                for y in np.flatnonzero(self.values[i]):
                    writer.writerow([int(x), int(y), format(self.values[i, y], ".17g")])
        return path

    def save_npz(self, path: Path | str) -> None:
        np.savez_compressed(
            path, t=self.t, sources=self.sources, values=self.values, error=self.truncation_error
        )


def _check_sources(field: ConductanceField, sources) -> np.ndarray:
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    isolated = sources[field.mu[sources] == 0]
    if isolated.size:
        raise ConfigurationError(f"Isolated source vertices: {isolated.tolist()}")
    return sources


def _to_q(field: ConductanceField, p: np.ndarray) -> np.ndarray:
    mu = field.mu
    return np.divide(p, mu, out=np.zeros_like(p), where=mu > 0)


def heat_kernel_series(
    field: ConductanceField,
    times: list[float] | np.ndarray,
    sources,
    tol: float = DEFAULT_TOL,
) -> list[HeatKernelTable]:
    """Heat-kernel tables at several times from one uniformization pass."""
    sources = _check_sources(field, sources)
    initial = np.zeros((sources.size, field.box.n_vertices))
    initial[np.arange(sources.size), sources] = 1.0
    values, errors = uniformize(field, initial, times, tol)
    return [
        HeatKernelTable(
            field=field,
            t=float(t),
            sources=sources,
            values=_to_q(field, values[i]),
            truncation_error=float(errors[i]),
            tol=tol,
        )
        for i, t in enumerate(np.atleast_1d(times))
    ]


def heat_kernel_exact(
    field: ConductanceField, t: float, sources, tol: float = DEFAULT_TOL
) -> HeatKernelTable:
    """q_t(x, .) for each source x by uniformization."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return heat_kernel_series(field, [t], sources, tol)[0]


def dense_kernel_oracle(field: ConductanceField, t: float, sources) -> np.ndarray:
    """p_t(x, .) rows from the dense matrix exponential of t L."""
    L = generator(field).toarray()
    return linalg.expm(t * L)[np.atleast_1d(sources)]


def chapman_kolmogorov_error(
    field: ConductanceField, s: float, t: float, tol: float = DEFAULT_TOL
) -> float:
    """max |p_{s+t} - p_s p_t| over all vertex pairs."""
    values, _ = uniformize(field, np.eye(field.box.n_vertices), [s, t, s + t], tol)
    ps, pt, pst = values
    return float(np.abs(pst - ps @ pt).max())


@dataclass
class CaloricCheck:
    t: float
    dt: float
    residual: float
    residual_half: float

    @property
    def ratio(self) -> float:
        """Residual at dt over residual at dt/2; about 4 for a second-order scheme."""
        return self.residual / self.residual_half if self.residual_half > 0 else float("inf")


def caloric_residual(
    field: ConductanceField, source: int, t: float, dt: float, tol: float = 1e-15
) -> float:
    """max_y |(q_{t+dt} - q_{t-dt}) / (2 dt) - L q_t| for u(t, y) = q_t(source, y)."""
    if not 0 < dt <= t:
        raise ValueError(f"Need 0 < dt <= t, got dt={dt}, t={t}")
    lo, mid, hi = heat_kernel_series(field, [t - dt, t, t + dt], [source], tol)
    derivative = (hi.values[0] - lo.values[0]) / (2 * dt)
    return float(np.abs(derivative - apply_generator(field, mid.values[0])).max())


def check_caloric(table: HeatKernelTable, dt: float | None = None) -> list[CaloricCheck]:
    """Finite-difference check of d/dt q_t = L q_t for each source, at dt and dt/2."""
    dt = table.t / 1000 if dt is None else dt
    tol = min(table.tol, 1e-15)
    checks = []
    for x in table.sources:
        checks.append(
            CaloricCheck(
                t=table.t,
                dt=dt,
                residual=caloric_residual(table.field, int(x), table.t, dt, tol),
                residual_half=caloric_residual(table.field, int(x), table.t, dt / 2, tol),
            )
        )
    return checks
