"""Data models for the epidemic module."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.errors import ConfigurationError
from src.utils.stats import Proportion, wilson_interval


class Status(str, enum.Enum):
    SUSCEPTIBLE = "susceptible"
    INFECTED = "infected"


class EventKind(str, enum.Enum):
    INFECT = "infect"
    RECOVER = "recover"
    REINFECT = "reinfect"


@dataclass(frozen=True)
class InfectionEvent:
    time: float
    particle: int
    vertex: int
    kind: EventKind


@dataclass
class EpidemicState:
    """Particles at the current clock: positions, statuses and recovery clocks."""

    clock: float
    positions: np.ndarray
    infected: np.ndarray
    recover_at: np.ndarray
    episode: np.ndarray
    start_offset: np.ndarray
    displacement: np.ndarray

    @property
    def n_particles(self) -> int:
        return int(self.positions.size)

    @property
    def n_infected(self) -> int:
        return int(self.infected.sum())

    def status(self, p: int) -> Status:
        return Status.INFECTED if self.infected[p] else Status.SUSCEPTIBLE

    def unwrapped(self) -> np.ndarray:
        """Positions relative to the origin in torus-unwrapped coordinates."""
        return self.start_offset + self.displacement

    def front(self) -> int:
        """max over infected particles of the l1 distance to the origin."""
        if not self.infected.any():
            return 0
        return int(np.abs(self.unwrapped()[self.infected]).sum(axis=1).max())

    def colocated_pairs(self, among: np.ndarray | None = None) -> np.ndarray:
        """Vertices holding both a susceptible and an infected particle."""
        among = np.ones(self.n_particles, dtype=bool) if among is None else among
        return np.intersect1d(
            self.positions[self.infected & among], self.positions[~self.infected & among]
        )


@dataclass
class FrontSeries:
    times: list[float] = field(default_factory=list)
    front: list[float] = field(default_factory=list)
    infected_count: list[int] = field(default_factory=list)
    extinction_time: float | None = None
    population: int | None = None

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None

    def record(self, t: float, front: float, infected: int) -> None:
        self.times.append(float(t))
        self.front.append(float(front))
        self.infected_count.append(int(infected))

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "front", "infected_count"])
            for t, fr, n in zip(self.times, self.front, self.infected_count):
                writer.writerow([format(t, ".17g"), format(fr, ".17g"), n])
        return path


class CellEventSpec(BaseModel):
    """Space-time cell parameters.

    ``beta_time`` is the time length of a cell (not the density-per-mass beta of
    the mixing module); it defaults to ``beta_ratio * ell^2``.
    """

    model_config = ConfigDict(extra="forbid")

    ell: int = Field(default=16, ge=1)
    beta_time: float | None = Field(default=None, gt=0)
    beta_ratio: float = Field(default=4.0, gt=0)
    eta: int = Field(default=1, ge=1)
    lambda0: float = Field(default=4.0, ge=0)
    w: float | None = Field(default=None, gt=0)
    gamma: float = Field(default=0.0, ge=0)
    c1: float = Field(default=0.05, gt=0)
    collision_time: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _fill_beta_time(self) -> CellEventSpec:
        if self.beta_time is None:
            self.beta_time = self.beta_ratio * self.ell**2
        return self

    @property
    def T(self) -> float:
        """Collision window, ell^(5/3) unless overridden."""
        if self.collision_time is not None:
            return self.collision_time
        return float(self.ell) ** (5 / 3)

    @property
    def collision_threshold(self) -> float:
        """c1 lambda0 ell^{1/3} / 2 collided particles required by F2."""
        return self.c1 * self.lambda0 * self.ell ** (1 / 3) / 2

    def violations(self) -> list[str]:
        out = []
        if self.T >= self.beta_time:
            out.append(f"T = {self.T:.3f} must be < beta_time = {self.beta_time:g}")
        return out

    def require_valid(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))


@dataclass
class CellRep:
    e_st: bool
    f1: bool
    f2: bool
    f3: bool
    collided: int
    recovered: bool = False


@dataclass
class CellEventReport:
    spec: CellEventSpec
    reps: list[CellRep] = field(default_factory=list)
    mode: str = "cell"

    @property
    def estimate(self) -> Proportion:
        return wilson_interval(sum(r.e_st for r in self.reps), len(self.reps))

    @property
    def probability(self) -> float:
        return self.estimate.value

    @property
    def collided_counts(self) -> list[int]:
        return [r.collided for r in self.reps]

    def decomposition(self) -> dict[str, Proportion]:
        n = len(self.reps)
        return {
            "F1": wilson_interval(sum(r.f1 for r in self.reps), n),
            "F2": wilson_interval(sum(r.f2 for r in self.reps), n),
            "F3": wilson_interval(sum(r.f3 for r in self.reps), n),
        }

    def __str__(self) -> str:
        return f"{self.mode}: P[E_st] = {self.estimate}"
