"""Data models for base-height cell fields and Lipschitz surfaces."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.errors import ConfigurationError

DEPENDENCE_DISCLAIMER = (
    "Adjacent super cells overlap, so flags of neighbouring cells are not independent."
)


class Provenance(str, enum.Enum):
    IID = "iid"
    SIMULATED = "simulated"


class Side(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class BaseHeightIndex:
    """Bijection between space-time cells (i, tau) and base-height cells (b, h).

    ``height_dim`` is 1-based. h is that coordinate of i; b is the remaining
    spatial coordinates of i followed by tau.
    """

    d: int
    height_dim: int

    def __post_init__(self) -> None:
        if not 1 <= self.height_dim <= self.d:
            raise ConfigurationError(f"height_dim must be in 1..{self.d}, got {self.height_dim}")

    def to_base_height(self, i, tau: int) -> tuple[tuple[int, ...], int]:
        i = tuple(int(c) for c in i)
        if len(i) != self.d:
            raise ValueError(f"Expected {self.d} spatial coordinates, got {len(i)}")
        k = self.height_dim - 1
        return i[:k] + i[k + 1 :] + (int(tau),), i[k]

    def from_base_height(self, b, h: int) -> tuple[tuple[int, ...], int]:
        b = tuple(int(c) for c in b)
        if len(b) != self.d:
            raise ValueError(f"Expected {self.d} base coordinates, got {len(b)}")
        k = self.height_dim - 1
        spatial = b[:-1]
        return spatial[:k] + (int(h),) + spatial[k:], b[-1]


@dataclass
class CellField:
    """Good/bad flags on a finite base-height box.

    ``good`` has shape (*base_shape, n_levels); level k is height
    ``height_min + k``.
    """

    good: np.ndarray
    height_min: int = 0
    provenance: Provenance = Provenance.IID
    p_bad: float | None = None
    disclaimer: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.good = np.asarray(self.good, dtype=bool)
        if self.good.ndim < 2:
            raise ConfigurationError("A cell field needs at least one base axis and a height axis")

    @property
    def base_shape(self) -> tuple[int, ...]:
        return self.good.shape[:-1]

    @property
    def n_levels(self) -> int:
        return self.good.shape[-1]

    @property
    def heights(self) -> np.ndarray:
        return np.arange(self.height_min, self.height_min + self.n_levels)

    @property
    def height_max(self) -> int:
        return self.height_min + self.n_levels - 1

    @property
    def origin(self) -> tuple[int, ...]:
        """Base-height array index of the centre base point at height 0."""
        return tuple(s // 2 for s in self.base_shape) + (-self.height_min,)

    def level(self, h: int) -> int:
        return h - self.height_min

    def is_good(self, b, h: int) -> bool:
        k = self.level(h)
        if not 0 <= k < self.n_levels:
            return False
        return bool(self.good[tuple(b) + (k,)])

    def bad_fraction(self) -> float:
        return float(1.0 - self.good.mean())

    def mirrored(self) -> CellField:
        """The field seen with heights negated."""
        return CellField(
            good=self.good[..., ::-1].copy(),
            height_min=-self.height_max,
            provenance=self.provenance,
            p_bad=self.p_bad,
            disclaimer=self.disclaimer,
            meta=dict(self.meta),
        )

    def to_json(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "base_shape": list(self.base_shape),
            "height_min": self.height_min,
            "provenance": self.provenance.value,
            "p_bad": self.p_bad,
            "disclaimer": self.disclaimer,
            "meta": self.meta,
            "good": self.good.astype(int).tolist(),
        }
        path.write_text(json.dumps(payload))
        return path

    @classmethod
    def from_json(cls, path: Path | str) -> CellField:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Cell field not found: {path}")
        data = json.loads(path.read_text())
        return cls(
            good=np.asarray(data["good"], dtype=bool),
            height_min=int(data["height_min"]),
            provenance=Provenance(data["provenance"]),
            p_bad=data.get("p_bad"),
            disclaimer=data.get("disclaimer", ""),
            meta=data.get("meta", {}),
        )


@dataclass
class LipschitzSurface:
    """Two height functions on the base: f_plus >= 0 and f_minus <= 0.

    A side that could not be built within the height extent is None.
    """

    f_plus: np.ndarray | None
    f_minus: np.ndarray | None

    @property
    def exists(self) -> bool:
        return self.f_plus is not None and self.f_minus is not None

    def to_json(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "exists": self.exists,
            "f_plus": None if self.f_plus is None else self.f_plus.tolist(),
            "f_minus": None if self.f_minus is None else self.f_minus.tolist(),
        }
        path.write_text(json.dumps(payload))
        return path

    @classmethod
    def from_json(cls, path: Path | str) -> LipschitzSurface:
        data = json.loads(Path(path).read_text())
        return cls(
            f_plus=None if data["f_plus"] is None else np.asarray(data["f_plus"], dtype=np.int64),
            f_minus=None if data["f_minus"] is None else np.asarray(data["f_minus"], dtype=np.int64),
        )

    def __str__(self) -> str:
        if not self.exists:
            return "no two-sided surface within the height extent"
        return (
            f"surface: F+ in [{int(self.f_plus.min())}, {int(self.f_plus.max())}], "
            f"F- in [{int(self.f_minus.min())}, {int(self.f_minus.max())}]"
        )
