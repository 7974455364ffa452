"""Tests for the single-walk engine, the walker ensemble and exit tails."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.errors import ConfigurationError, RejectionFloorError
from src.lattice.field import sample_conductances
from src.lattice.models import LatticeBox, LawSpec
from src.mixing.confined import confined_kernel
from src.utils.stats import categorical_test, exponential_ks
from src.walk.engine import (
    Trajectory,
    WalkConfig,
    exit_time,
    simulate_confined_walk,
    simulate_walk,
)
from src.walk.ensemble import advance, advance_confined, segments
from src.walk.exit_times import empirical_exit_tail, fit_exit_tail


# ---------------------------------------------------------------------------
#  Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def small_torus():
    return sample_conductances(LatticeBox(d=2, side=4), LawSpec.uniform_elliptic(3.0), seed=12)


def _endpoint_tv(endpoints: np.ndarray, law: np.ndarray) -> float:
    freq = np.bincount(endpoints, minlength=law.size) / endpoints.size
    return 0.5 * float(np.abs(freq - law).sum())


class TestSimulateWalk:
    def test_two_vertex_walk_alternates(self, two_vertex_field):
        traj = simulate_walk(two_vertex_field, 0, WalkConfig(horizon=20.0, seed=1))
        traj.check(two_vertex_field)
        assert traj.n_jumps > 0
        expected = [2 if k % 2 == 0 else 0 for k in range(traj.n_jumps)]
        assert list(traj.vertices) == expected

    def test_isolated_start_never_moves(self, two_vertex_field, caplog):
        traj = simulate_walk(two_vertex_field, 1, WalkConfig(horizon=10.0, seed=0))
        assert traj.isolated
        assert traj.n_jumps == 0
        assert traj.endpoint == 1
        assert "isolated" in caplog.text

    def test_same_seed_same_path(self, uniform_torus):
        cfg = WalkConfig(horizon=30.0, seed=7)
        a = simulate_walk(uniform_torus, 5, cfg)
        b = simulate_walk(uniform_torus, 5, cfg)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.vertices, b.vertices)

    def test_path_follows_positive_edges(self, uniform_wall):
        traj = simulate_walk(uniform_wall, uniform_wall.box.origin, WalkConfig(horizon=50.0))
        traj.check(uniform_wall)
        assert np.all(np.diff(traj.times) > 0)
        assert traj.times[-1] <= 50.0

    def test_check_rejects_tampered_path(self, uniform_torus):
        traj = simulate_walk(uniform_torus, 0, WalkConfig(horizon=20.0, seed=2))
        traj.vertices[0] = (traj.vertices[0] + 3) % uniform_torus.box.n_vertices
        with pytest.raises(ValueError):
            traj.check(uniform_torus)

    def test_position_at(self):
        traj = Trajectory(
            start=0,
            horizon=3.0,
            times=np.array([1.0, 2.0]),
            vertices=np.array([4, 9]),
            slots=np.array([0, 0]),
        )
        assert traj.position_at(0.5) == 0
        assert traj.position_at(1.0) == 4
        assert traj.position_at(2.5) == 9
        assert list(traj.holding_times) == [1.0, 1.0]

    def test_jsonl_keeps_path(self, tmp_path, uniform_torus):
        traj = simulate_walk(uniform_torus, 3, WalkConfig(horizon=10.0, seed=4))
        traj.to_jsonl(tmp_path / "walk.jsonl")
        loaded = Trajectory.from_jsonl(tmp_path / "walk.jsonl")
        assert loaded.start == 3
        assert np.array_equal(loaded.vertices, traj.vertices)
        assert np.allclose(loaded.times, traj.times)

    def test_exit_time_of_zero_ball_is_first_jump(self, constant_torus):
        x = constant_torus.box.origin
        traj = simulate_walk(constant_torus, x, WalkConfig(horizon=20.0, seed=3))
        assert exit_time(constant_torus, traj, x, 0) == pytest.approx(traj.times[0])

    def test_exit_time_wrong_start(self, constant_torus):
        traj = simulate_walk(constant_torus, 0, WalkConfig(horizon=1.0))
        with pytest.raises(ValueError):
            exit_time(constant_torus, traj, 1, 2)

    def test_holding_times_are_unit_exponential(self, small_torus):
        traj = simulate_walk(small_torus, 0, WalkConfig(horizon=20_000.0, seed=13))
        assert traj.n_jumps > 19_000
        assert exponential_ks(traj.holding_times) > 0.01

    def test_neighbour_choice_follows_conductances(self, small_torus):
        x = small_torus.box.origin
        traj = simulate_walk(small_torus, x, WalkConfig(horizon=20_000.0, seed=14))
        prev = np.concatenate(([traj.start], traj.vertices[:-1]))
        slots = traj.slots[prev == x]
        assert slots.size > 800
        observed = np.bincount(slots, minlength=small_torus.conductances.shape[1])
        assert categorical_test(observed, small_torus.conductances[x] / small_torus.mu[x]) > 0.01


class TestConfinedWalk:
    def test_needs_rho(self, uniform_torus):
        with pytest.raises(ConfigurationError):
            simulate_confined_walk(uniform_torus, 0, WalkConfig(horizon=5.0))

    def test_rho_must_be_below_box_side(self, constant_torus):
        with pytest.raises(ConfigurationError, match="smaller than the box side"):
            simulate_confined_walk(constant_torus, 0, WalkConfig(horizon=5.0, rho=8.0))

    def test_endpoint_law_matches_confined_kernel(self, uniform_torus):
        x, t, rho = uniform_torus.box.origin, 2.0, 2.0
        law = confined_kernel(uniform_torus, t, rho, [x]).row(x)
        endpoints = np.array(
            [
                simulate_confined_walk(uniform_torus, x, WalkConfig(horizon=t, seed=s, rho=rho))
                .trajectory.endpoint
                for s in range(1500)
            ]
        )
        assert _endpoint_tv(endpoints, law) < 0.08

    def test_accepted_path_stays_in_cube(self, uniform_torus):
        cfg = WalkConfig(horizon=5.0, seed=9, rho=4.0)
        walk = simulate_confined_walk(uniform_torus, 0, cfg, trials=20)
        assert walk.trajectory.max_excursion(uniform_torus) <= 2
        assert walk.accepted == 20
        assert 0 < walk.acceptance <= 1

    def test_floor_aborts(self, constant_torus):
        cfg = WalkConfig(horizon=50.0, seed=0, rho=1.0)
        with pytest.raises(RejectionFloorError):
            simulate_confined_walk(constant_torus, 0, cfg, floor=0.5)


class TestAdvance:
    def test_two_vertex_occupation(self, two_vertex_field):
        # p_t(0, 0) = (1 + exp(-2t)) / 2 for a single unit edge
        t = 0.5
        batch = advance(two_vertex_field, np.zeros(20000), t, np.random.default_rng(0))
        at_start = np.mean(batch.final == 0)
        assert at_start == pytest.approx((1 + math.exp(-2 * t)) / 2, abs=0.02)
        assert set(np.unique(batch.final)) <= {0, 2}

    def test_jump_counts_are_poisson(self, uniform_torus):
        batch = advance(uniform_torus, np.zeros(5000), 4.0, np.random.default_rng(1))
        assert batch.counts.mean() == pytest.approx(4.0, abs=0.15)
        assert batch.counts.var() == pytest.approx(4.0, rel=0.1)

    def test_isolated_walkers_stay(self, two_vertex_field):
        batch = advance(two_vertex_field, np.array([1, 3]), 10.0, np.random.default_rng(0))
        assert batch.n_jumps == 0
        assert list(batch.final) == [1, 3]

    def test_displacement_on_hard_wall(self, uniform_wall):
        box = uniform_wall.box
        starts = np.full(300, box.origin)
        batch = advance(uniform_wall, starts, 6.0, np.random.default_rng(2))
        moved = box.coords(batch.final) - box.coords(batch.starts)
        assert np.array_equal(batch.displacement, moved)
        assert np.all(batch.excursion >= np.abs(batch.displacement).max(axis=1))

    def test_negative_duration(self, uniform_torus):
        with pytest.raises(ValueError):
            advance(uniform_torus, np.zeros(2), -1.0, np.random.default_rng(0))

    def test_segments_tile_the_window(self, uniform_torus):
        batch = advance(uniform_torus, np.arange(50), 3.0, np.random.default_rng(3), t0=2.0)
        seg = segments(batch)
        for w in range(batch.n_walkers):
            mine = seg.walker == w
            start, end = seg.start[mine], seg.end[mine]
            assert start[0] == 2.0
            assert end[-1] == 5.0
            assert np.array_equal(start[1:], end[:-1])

    def test_subset_renumbers(self, uniform_torus):
        batch = advance(uniform_torus, np.arange(10), 2.0, np.random.default_rng(4))
        sub = batch.subset(np.array([7, 2]))
        assert list(sub.starts) == [2, 7]
        assert sub.n_jumps == batch.counts[2] + batch.counts[7]
        assert np.array_equal(sub.final, batch.final[[2, 7]])


class TestAdvanceConfined:
    def test_excursions_within_rho(self, uniform_torus):
        ens = advance_confined(
            uniform_torus, np.zeros(200), 4.0, np.random.default_rng(0), rho=4.0
        )
        assert ens.batch.n_walkers == 200
        assert np.all(ens.batch.excursion <= 2)
        assert 0 < ens.acceptance <= 1
        assert np.all(ens.attempts >= 1)

    def test_endpoint_law_matches_confined_kernel(self, uniform_torus):
        x, t, rho = uniform_torus.box.origin, 3.0, 4.0
        law = confined_kernel(uniform_torus, t, rho, [x]).row(x)
        ens = advance_confined(
            uniform_torus, np.full(20_000, x), t, np.random.default_rng(6), rho=rho
        )
        assert _endpoint_tv(ens.batch.final, law) < 0.04

    def test_region_is_respected(self, uniform_torus):
        region = np.zeros(uniform_torus.box.n_vertices, dtype=bool)
        region[uniform_torus.box.cube((0, 0), 4)] = True
        starts = np.full(100, uniform_torus.box.index((1, 1)))
        ens = advance_confined(
            uniform_torus, starts, 1.0, np.random.default_rng(1), region=region
        )
        assert not ens.batch.visits_outside(region).any()

    def test_floor_aborts(self, constant_torus):
        with pytest.raises(RejectionFloorError) as info:
            advance_confined(
                constant_torus, np.zeros(3), 50.0, np.random.default_rng(0), rho=1.0, floor=0.5
            )
        assert info.value.acceptance == 0.0


class TestExitTail:
    def test_needs_walkers(self, uniform_torus):
        with pytest.raises(ValueError):
            empirical_exit_tail(uniform_torus, 0, 2, 1.0, 0, seed=0)

    def test_frequency_grows_with_time(self, uniform_torus):
        early = empirical_exit_tail(uniform_torus, 0, 3, 2.0, 2000, seed=1)
        late = empirical_exit_tail(uniform_torus, 0, 3, 20.0, 2000, seed=1)
        assert late.frequency > early.frequency

    def test_fit_has_positive_c4(self, uniform_torus):
        result = fit_exit_tail(uniform_torus, 0, [2, 4], [2.0, 8.0], 2000, seed=0)
        assert result.fit is not None
        assert result.c4 > 0
        assert result.c3 > 0
        assert len(result.points) == 4
