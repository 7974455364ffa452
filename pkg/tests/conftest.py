"""Shared fields for the lab tests."""

from __future__ import annotations

import numpy as np
import pytest

from src.lattice.field import ConductanceField, sample_conductances
from src.lattice.models import Boundary, LatticeBox, LawSpec


# ---------------------------------------------------------------------------
#  Fixtures
# ---------------------------------------------------------------------------


def make_two_vertex_field() -> ConductanceField:
    """2x2 hard-wall box with a single unit edge between vertices 0 and 2."""
    box = LatticeBox(d=2, side=2, boundary=Boundary.HARD_WALL)
    weights = np.zeros((2, 4))
    weights[0, 0] = 1.0
    return ConductanceField.from_weights(box, weights)


@pytest.fixture
def two_vertex_field() -> ConductanceField:
    return make_two_vertex_field()


@pytest.fixture
def constant_torus() -> ConductanceField:
    return sample_conductances(LatticeBox(d=2, side=8), LawSpec.constant(1.0), seed=0)


@pytest.fixture
def uniform_torus() -> ConductanceField:
    return sample_conductances(LatticeBox(d=2, side=16), LawSpec.uniform_elliptic(2.0), seed=3)


@pytest.fixture
def uniform_wall() -> ConductanceField:
    box = LatticeBox(d=2, side=12, boundary=Boundary.HARD_WALL)
    return sample_conductances(box, LawSpec.uniform_elliptic(2.0), seed=5)
