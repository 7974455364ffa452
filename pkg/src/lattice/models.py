"""Data models for the lattice module."""

from __future__ import annotations

import enum
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class Boundary(str, enum.Enum):
    TORUS = "torus"
    HARD_WALL = "hard_wall"


class LawKind(str, enum.Enum):
    CONSTANT = "constant"
    UNIFORM_ELLIPTIC = "uniform_elliptic"
    DILUTE = "dilute"
    EXPLICIT = "explicit"


# Bond percolation thresholds used to guard dilute laws.
P_C = {2: 0.5, 3: 0.2488}


class LatticeBox(BaseModel):
    """Finite box of Z^d with side^d vertices, periodic or walled.

    Vertices are flat indices in C order over ``shape``. The origin is the
    centre vertex ``(side // 2, ..., side // 2)``.
    """

    model_config = ConfigDict(frozen=True)

    d: int = Field(ge=2)
    side: int = Field(ge=2)
    boundary: Boundary = Boundary.TORUS

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def n_vertices(self) -> int:
        return self.side**self.d

    @property
    def is_torus(self) -> bool:
        return self.boundary == Boundary.TORUS

    @property
    def origin(self) -> int:
        return self.index((self.side // 2,) * self.d)

    @property
    def origin_coords(self) -> np.ndarray:
        return np.full(self.d, self.side // 2, dtype=np.int64)

    def index(self, coords) -> int | np.ndarray:
        """Flat index of coordinates; arrays of shape (..., d) are accepted."""
        c = np.asarray(coords, dtype=np.int64)
        if self.is_torus:
            c = np.mod(c, self.side)
        flat = np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), self.shape)
        return int(flat) if np.ndim(flat) == 0 else flat

    def coords(self, index) -> np.ndarray:
        """Coordinates of flat indices, shape (..., d)."""
        return np.stack(np.unravel_index(np.asarray(index), self.shape), axis=-1)

    def contains(self, coords) -> np.ndarray:
        c = np.asarray(coords)
        if self.is_torus:
            return np.ones(c.shape[:-1], dtype=bool)
        return np.all((c >= 0) & (c < self.side), axis=-1)

    def delta(self, a, b) -> np.ndarray:
        """Coordinate difference b - a, wrapped into [-side/2, side/2) on a torus."""
        diff = np.asarray(b, dtype=np.int64) - np.asarray(a, dtype=np.int64)
        if self.is_torus:
            diff = (diff + self.side // 2) % self.side - self.side // 2
        return diff

    def cube(self, lower, side: int) -> np.ndarray:
        """Flat indices of the cube lower + [0, side)^d, clipped to the box."""
        axes = [np.arange(lo, lo + side) for lo in np.asarray(lower, dtype=np.int64)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        grid = grid[self.contains(grid)]
        return np.unique(self.index(grid)) if grid.size else np.empty(0, dtype=np.int64)

    def cube_fits(self, lower, side: int) -> bool:
        """Whether lower + [0, side)^d lies in the box without wrapping onto itself."""
        lower = np.asarray(lower, dtype=np.int64)
        if self.is_torus:
            return side <= self.side
        return bool(np.all(lower >= 0) and np.all(lower + side <= self.side))


class LawSpec(BaseModel):
    """Distribution of the i.i.d. edge weights."""

    model_config = ConfigDict(frozen=True)

    kind: LawKind = LawKind.UNIFORM_ELLIPTIC
    value: float = Field(default=1.0, gt=0)
    c_m: float = Field(default=2.0, gt=1)
    p0: float = Field(default=0.0, ge=0, lt=1)

    @classmethod
    def constant(cls, value: float = 1.0, c_m: float = 2.0) -> LawSpec:
        return cls(kind=LawKind.CONSTANT, value=value, c_m=max(c_m, value, 1.0 / value))

    @classmethod
    def uniform_elliptic(cls, c_m: float) -> LawSpec:
        return cls(kind=LawKind.UNIFORM_ELLIPTIC, c_m=c_m)

    @classmethod
    def dilute(cls, p0: float, c_m: float) -> LawSpec:
        return cls(kind=LawKind.DILUTE, p0=p0, c_m=c_m)

    def describe(self) -> str:
        if self.kind == LawKind.CONSTANT:
            return f"constant({self.value:g})"
        if self.kind == LawKind.DILUTE:
            return f"dilute(p0={self.p0:g}, C_M={self.c_m:g})"
        return f"{self.kind.value}(C_M={self.c_m:g})"


class LatticeSpec(BaseModel):
    """Everything needed to rebuild a conductance field from a seed."""

    model_config = ConfigDict(extra="forbid")

    d: int = Field(default=2, ge=2)
    side: int = Field(default=32, ge=2)
    boundary: Boundary = Boundary.TORUS
    law: LawKind = LawKind.CONSTANT
    value: float = Field(default=1.0, gt=0)
    c_m: float = Field(default=2.0, gt=1)
    p0: float = Field(default=0.0, ge=0, lt=1)
    seed: int = 0

    @cached_property
    def box(self) -> LatticeBox:
        return LatticeBox(d=self.d, side=self.side, boundary=self.boundary)

    @cached_property
    def law_spec(self) -> LawSpec:
        if self.law == LawKind.CONSTANT:
            return LawSpec.constant(self.value, self.c_m)
        return LawSpec(kind=self.law, value=self.value, c_m=self.c_m, p0=self.p0)
