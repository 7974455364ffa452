"""Event-driven continuous-time random walk with exit times and confined walks."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import ConfigurationError, RejectionFloorError
from src.lattice.field import ConductanceField
from src.walk.ensemble import DEFAULT_ACCEPTANCE_FLOOR, JumpBatch

logger = logging.getLogger(__name__)


class WalkConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon: float = Field(ge=0)
    seed: int = 0
    rho: float | None = Field(default=None, gt=0)


@dataclass
class Trajectory:
    """Piecewise-constant path: ``vertices[k]`` is entered at ``times[k]``."""

    start: int
    horizon: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    vertices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    slots: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    isolated: bool = False

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    @property
    def endpoint(self) -> int:
        return int(self.vertices[-1]) if self.n_jumps else self.start

    @property
    def holding_times(self) -> np.ndarray:
        """Completed holding times (the censored last one is excluded)."""
        return np.diff(self.times, prepend=0.0)

    def position_at(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.start if k == 0 else int(self.vertices[k - 1])

    def displacement_path(self, field: ConductanceField) -> np.ndarray:
        """(n_jumps, d) unwrapped displacement after each jump."""
        if not self.n_jumps:
            return np.zeros((0, field.box.d), dtype=np.int64)
        return np.cumsum(field.slot_steps[self.slots], axis=0)

    def max_excursion(self, field: ConductanceField) -> int:
        path = self.displacement_path(field)
        return int(np.abs(path).max()) if path.size else 0

    def check(self, field: ConductanceField) -> None:
        """Raise if times are not increasing or a jump is not along a positive edge."""
        if self.n_jumps == 0:
            return
        if np.any(np.diff(self.times) <= 0) or self.times[-1] > self.horizon or self.times[0] <= 0:
            raise ValueError("Jump times must be strictly increasing within (0, horizon]")
        prev = np.concatenate(([self.start], self.vertices[:-1]))
        if np.any(field.neighbors[prev, self.slots] != self.vertices):
            raise ValueError("Recorded slot does not lead to the recorded vertex")
        if np.any(field.conductances[prev, self.slots] <= 0):
            raise ValueError("Trajectory crosses a zero-weight edge")

    def to_jsonl(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(json.dumps({"start": self.start, "horizon": self.horizon}) + "\n")
            for t, v, s in zip(self.times, self.vertices, self.slots):
                f.write(json.dumps({"time": float(t), "vertex": int(v), "slot": int(s)}) + "\n")

    @classmethod
    def from_jsonl(cls, path: Path | str) -> Trajectory:
        with open(path) as f:
            header = json.loads(f.readline())
            rows = [json.loads(line) for line in f if line.strip()]
        return cls(
            start=header["start"],
            horizon=header["horizon"],
            times=np.array([r["time"] for r in rows], dtype=float),
            vertices=np.array([r["vertex"] for r in rows], dtype=np.int64),
            slots=np.array([r["slot"] for r in rows], dtype=np.int64),
        )

    @classmethod
    def from_batch(cls, batch: JumpBatch, w: int) -> Trajectory:
        """Trajectory of walker ``w`` with times measured from the batch start."""
        sl = batch.jumps_of(w)
        return cls(
            start=int(batch.starts[w]),
            horizon=batch.t1 - batch.t0,
            times=batch.time[sl] - batch.t0,
            vertices=batch.vertex[sl].copy(),
            slots=batch.slot[sl].copy(),
        )


def _walk(field: ConductanceField, x: int, horizon: float, rng: np.random.Generator) -> Trajectory:
    if field.mu[x] == 0:
        return Trajectory(start=x, horizon=horizon, isolated=True)
    cdf, nbr = field.jump_cdf, field.neighbors
    times, vertices, slots = [], [], []
    t, v = 0.0, x
    while True:
        t += rng.exponential()
        if t > horizon:
            break
        s = int(np.searchsorted(cdf[v], rng.random(), side="right"))
        v = int(nbr[v, s])
        times.append(t)
        vertices.append(v)
        slots.append(s)
    return Trajectory(
        start=x,
        horizon=horizon,
        times=np.asarray(times, dtype=float),
        vertices=np.asarray(vertices, dtype=np.int64),
        slots=np.asarray(slots, dtype=np.int64),
    )


def simulate_walk(field: ConductanceField, x: int, cfg: WalkConfig) -> Trajectory:
    """Walk with exponential(1) holding times and neighbours chosen by mu_xy / mu_x."""
    traj = _walk(field, x, cfg.horizon, np.random.default_rng(cfg.seed))
    if traj.isolated:
        logger.warning("Start vertex %d is isolated; walk never moves", x)
    return traj


def exit_time(field: ConductanceField, traj: Trajectory, x: int, r: int) -> float | None:
    """First jump time whose destination leaves B(x, r), or None within the horizon."""
    if traj.start != x:
        raise ValueError(f"Trajectory starts at {traj.start}, not {x}")
    if not traj.n_jumps:
        return None
    outside = field.distances(x, limit=r)[traj.vertices] > r
    k = int(np.argmax(outside))
    return float(traj.times[k]) if outside[k] else None


@dataclass
class ConfinedWalk:
    trajectory: Trajectory | None
    accepted: int
    attempts: int

    @property
    def acceptance(self) -> float:
        """Running estimate of the probability p_E(rho) of staying confined."""
        return self.accepted / self.attempts if self.attempts else float("nan")


def simulate_confined_walk(
    field: ConductanceField,
    x: int,
    cfg: WalkConfig,
    trials: int = 1,
    floor: float = DEFAULT_ACCEPTANCE_FLOOR,
) -> ConfinedWalk:
    """Rejection-sample a walk whose displacement stays in the cube [-rho/2, rho/2]^d.

    Keeps resimulating until ``trials`` paths have been accepted; the first
    accepted path is returned together with the acceptance frequency.
    """
    if cfg.rho is None:
        raise ConfigurationError("Confined walk needs a confinement side rho")
    if cfg.rho >= field.box.side:
        raise ConfigurationError(
            f"Confinement side rho={cfg.rho:g} must be smaller than the box side {field.box.side}"
        )
    rng = np.random.default_rng(cfg.seed)
    max_attempts = math.ceil(10 / floor) * max(trials, 1)
    kept: Trajectory | None = None
    accepted = attempts = 0
    while accepted < trials:
        if attempts >= max_attempts:
            raise RejectionFloorError(
                f"Confined walk from {x}: {accepted} of {attempts} paths accepted "
                f"(floor {floor:g})",
                walker=x,
                acceptance=accepted / attempts,
            )
        traj = _walk(field, x, cfg.horizon, rng)
        attempts += 1
        if traj.max_excursion(field) <= cfg.rho / 2:
            accepted += 1
            if kept is None:
                kept = traj
    result = ConfinedWalk(trajectory=kept, accepted=accepted, attempts=attempts)
    if result.acceptance < floor:
        raise RejectionFloorError(
            f"Acceptance {result.acceptance:.2e} below floor {floor:g}",
            walker=x,
            acceptance=result.acceptance,
        )
    return result
