"""Tests for the SI/SIS dynamics, front speed, cell events and Poisson tail bounds."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.epidemic.cells import (
    CellGeometry,
    SpreadEstimate,
    collision_census,
    estimate_cell_event,
    estimate_nu,
    first_contact,
    fit_collision_exponent,
    fit_spread_rate,
    spread_probability,
)
from src.epidemic.chernoff import chernoff_grid, chernoff_poisson
from src.epidemic.dynamics import run_si, run_sis
from src.epidemic.front import front_speed
from src.epidemic.models import CellEventSpec, EpidemicState, FrontSeries, Status
from src.errors import ConfigurationError
from src.lattice.field import sample_conductances
from src.lattice.models import LatticeBox, LawSpec
from src.utils.stats import wilson_interval
from src.walk.ensemble import Segments


# ---------------------------------------------------------------------------
#  Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def torus24():
    return sample_conductances(LatticeBox(d=2, side=24), LawSpec.uniform_elliptic(2.0), seed=2)


def _segments(walker, vertex, start, end) -> Segments:
    return Segments(
        walker=np.asarray(walker),
        vertex=np.asarray(vertex),
        start=np.asarray(start, dtype=float),
        end=np.asarray(end, dtype=float),
    )


class TestEpidemicState:
    def _make_state(self) -> EpidemicState:
        return EpidemicState(
            clock=0.0,
            positions=np.array([5, 5, 7]),
            infected=np.array([True, False, True]),
            recover_at=np.full(3, np.inf),
            episode=np.array([1, 0, 1]),
            start_offset=np.array([[0, 0], [1, 2], [-3, 1]]),
            displacement=np.array([[1, 0], [0, 0], [0, -2]]),
        )

    def test_front_uses_infected_only(self):
        state = self._make_state()
        # unwrapped: (1, 0), (1, 2), (-3, -1)
        assert state.front() == 4
        assert state.n_infected == 2
        assert state.status(1) == Status.SUSCEPTIBLE

    def test_colocated_pairs(self):
        state = self._make_state()
        assert list(state.colocated_pairs()) == [5]
        among = np.array([False, True, True])
        assert state.colocated_pairs(among).size == 0

    def test_series_csv(self, tmp_path):
        series = FrontSeries()
        series.record(0.0, 0, 1)
        series.record(1.5, 2, 3)
        lines = series.to_csv(tmp_path / "front.csv").read_text().splitlines()
        assert lines == ["t,front,infected_count", "0,0,1", "1.5,2,3"]


class TestDynamics:
    def test_si_spreads_without_conflicts(self, uniform_torus):
        times = np.linspace(0.0, 20.0, 11)
        run = run_si(uniform_torus, 2.0, 20.0, seed=1, sample_times=times)
        counts = run.series.infected_count
        assert run.series.times == times.tolist()
        assert counts[0] >= 1
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        assert counts[-1] > counts[0]
        assert not run.series.extinct
        assert run.n_infections == counts[-1]

    def test_same_seed_same_run(self, uniform_torus):
        a = run_si(uniform_torus, 1.0, 10.0, seed=5)
        b = run_si(uniform_torus, 1.0, 10.0, seed=5)
        assert a.series.infected_count == b.series.infected_count
        assert a.series.front == b.series.front

    def test_initial_infection_at_origin(self, uniform_torus):
        run = run_si(uniform_torus, 2.0, 0.0, seed=0, sample_times=[0.0])
        first = run.trace[0]
        assert first.particle == 0
        assert first.vertex == uniform_torus.box.origin
        assert run.state.positions[0] == uniform_torus.box.origin

    def test_more_particles_infect_more(self, uniform_torus):
        low = run_si(uniform_torus, 1.0, 15.0, seed=3, intensity_cap=2.0)
        high = run_si(uniform_torus, 2.0, 15.0, seed=3, intensity_cap=2.0)
        assert np.all(low.active <= high.active)
        assert np.all(low.state.infected <= high.state.infected)

    def test_fast_recovery_dies_out(self, uniform_torus):
        run = run_sis(uniform_torus, 0.5, 50.0, 30.0, seed=0)
        assert run.series.extinct
        assert run.series.extinction_time < 30.0
        assert run.state.n_infected == 0

    def test_sis_records_recoveries(self, uniform_torus):
        run = run_sis(uniform_torus, 2.0, 0.5, 10.0, seed=2)
        kinds = {e.kind.value for e in run.trace}
        assert "recover" in kinds

    def test_isolated_origin(self, two_vertex_field):
        with pytest.raises(ConfigurationError, match="isolated"):
            run_si(two_vertex_field, 1.0, 1.0)

    @pytest.mark.parametrize(
        "kwargs, error",
        [
            (dict(gamma=-1.0, horizon=1.0), ConfigurationError),
            (dict(gamma=0.0, horizon=-1.0), ValueError),
            (dict(gamma=0.0, horizon=1.0, slab=0.0), ValueError),
            (dict(gamma=0.0, horizon=1.0, intensity_cap=0.5), ConfigurationError),
        ],
    )
    def test_invalid_arguments(self, uniform_torus, kwargs, error):
        with pytest.raises(error):
            run_sis(uniform_torus, 1.0, **kwargs)


class TestFrontSpeed:
    def _series(self, slope: float) -> FrontSeries:
        series = FrontSeries()
        for t in range(11):
            series.record(float(t), slope * t, 1)
        return series

    def test_linear_front(self):
        fit = front_speed(self._series(2.0))
        assert fit.defined
        assert fit.slope == pytest.approx(2.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.positive
        assert fit.n_points == 9

    def test_extinct_series_undefined(self):
        series = self._series(1.0)
        series.extinction_time = 4.0
        assert not front_speed(series).defined

    def test_saturated_samples_are_dropped(self):
        series = FrontSeries(population=10)
        for t in range(11):
            series.record(float(t), 2.0 * t, t)
        for t in range(11, 31):
            series.record(float(t), 20.0, 10)
        fit = front_speed(series)
        assert fit.slope == pytest.approx(2.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.n_points == 9

    def test_simulated_series_knows_population(self, torus24):
        run = run_si(torus24, 2.0, 5.0, seed=0)
        assert run.series.population == run.state.n_particles

    def test_burn_in_range(self):
        with pytest.raises(ValueError):
            front_speed(self._series(1.0), burn_in=1.0)

    def test_simulated_front_moves(self, torus24):
        times = np.linspace(0.0, 40.0, 41)
        run = run_si(torus24, 2.0, 40.0, seed=0, sample_times=times)
        fit = front_speed(run.series)
        assert fit.defined
        assert fit.slope > 0


class TestChernoff:
    def test_bounds_hold(self):
        check = chernoff_poisson(10.0, 0.5)
        assert check.holds
        assert check.lower_exact < check.lower_bound
        assert check.upper_bound == pytest.approx(math.exp(-10 * 0.25 / 4))

    def test_grid_size(self):
        assert len(chernoff_grid([1.0, 10.0], [0.1, 0.5, 0.9])) == 6

    @pytest.mark.parametrize("lam, eps", [(0.0, 0.5), (1.0, 0.0), (1.0, 1.0)])
    def test_rejects_out_of_range(self, lam, eps):
        with pytest.raises(ValueError):
            chernoff_poisson(lam, eps)


class TestCellGeometry:
    def test_spec_defaults(self):
        spec = CellEventSpec(ell=8)
        assert spec.beta_time == 256.0
        assert spec.T == pytest.approx(32.0)
        assert spec.violations() == []

    def test_collision_window_must_precede_cell_end(self):
        spec = CellEventSpec(ell=4, beta_time=8.0)
        assert spec.violations()
        with pytest.raises(ConfigurationError):
            spec.require_valid()

    def test_cube_counts(self, torus24):
        geom = CellGeometry.build(torus24, 4, 1)
        assert geom.super_side == 12
        assert geom.n_cubes == 9
        assert geom.covered(geom.center_vertices()) == 1
        assert geom.covered(np.flatnonzero(geom.super_mask())) == 9
        assert geom.inner_mask().sum() == 16

    def test_super_cube_must_fit(self, torus24):
        with pytest.raises(ConfigurationError, match="does not fit"):
            CellGeometry.build(torus24, 8, 2)

    def test_eta_and_cube_checked(self, torus24):
        with pytest.raises(ConfigurationError):
            CellGeometry.build(torus24, 4, 0)
        with pytest.raises(ConfigurationError):
            CellGeometry.build(torus24, 4, 1, cube=(0, 0, 0))

    def test_first_contact(self):
        tagged = _segments([0, 0], [3, 4], [0.0, 2.0], [2.0, 5.0])
        others = _segments([0, 1, 2], [4, 3, 3], [1.0, 2.5, 1.5], [3.0, 4.0, 3.0])
        first = first_contact(tagged, others, 3, until=5.0)
        assert first[0] == 2.0
        assert first[1] == np.inf
        assert first[2] == 1.5


class TestCellEvents:
    def test_cell_event_reps(self, torus24):
        spec = CellEventSpec(ell=4, eta=1, lambda0=4.0)
        report = estimate_cell_event(torus24, spec, reps=3, seed=0)
        assert len(report.reps) == 3
        assert report.mode == "cell"
        for rep in report.reps:
            assert rep.e_st == rep.f3
            assert not rep.recovered
        assert set(report.decomposition()) == {"F1", "F2", "F3"}

    def test_cell_event_is_seeded(self, torus24):
        spec = CellEventSpec(ell=4, eta=1, lambda0=4.0)
        a = estimate_cell_event(torus24, spec, reps=2, seed=7)
        b = estimate_cell_event(torus24, spec, reps=2, seed=7)
        assert a.collided_counts == b.collided_counts

    def test_quick_recovery_spoils_event(self, torus24):
        spec = CellEventSpec(ell=4, eta=1, lambda0=4.0, gamma=10.0)
        report = estimate_cell_event(torus24, spec, reps=3, seed=1)
        assert report.mode == "recovery"
        assert all(rep.recovered for rep in report.reps)
        assert report.probability == 0.0

    def test_recovery_needs_rate(self, torus24):
        with pytest.raises(ConfigurationError):
            estimate_cell_event(torus24, CellEventSpec(ell=4), reps=1, seed=0, recovery=True)

    def test_nu_with_confinement(self, torus24):
        spec = CellEventSpec(ell=4, eta=1, lambda0=4.0, w=3.0)
        report = estimate_nu(torus24, spec, eps=0.1, reps=2, seed=0)
        assert len(report.reps) == 2
        assert report.mode.startswith("nu")

    def test_nu_eps_range(self, torus24):
        with pytest.raises(ConfigurationError):
            estimate_nu(torus24, CellEventSpec(ell=4), eps=1.5, reps=1, seed=0)

    def test_collision_census(self, torus24):
        census = collision_census(torus24, CellEventSpec(ell=4, lambda0=4.0), seed=0)
        assert 0 <= census.count <= census.n_background
        assert 0 < census.tagged_acceptance <= 1

    def test_collision_exponent_fit(self):
        ells = np.array([2.0, 4.0, 8.0, 16.0])
        fit = fit_collision_exponent(ells, 3 * ells ** (1 / 3))
        assert fit.slope == pytest.approx(1 / 3)


class TestSpread:
    def test_no_particles_never_reach(self, torus24):
        est = spread_probability(torus24, 0, 4, 1, 64.0, (1, 0), reps=5, seed=0)
        assert est.estimate.successes == 0
        assert est.estimate.trials == 5

    def test_many_particles_reach(self, torus24):
        est = spread_probability(torus24, 60, 4, 1, 64.0, (0, 0), reps=20, seed=1)
        assert est.estimate.value > 0.5

    def test_collision_time_sets_start_window(self, torus24):
        # default window 4^(5/3) ~ 10.08 does not fit before beta_time = 5
        est = spread_probability(
            torus24, 3, 4, 1, 5.0, (0, 0), reps=2, seed=0, collision_time=2.0
        )
        assert est.estimate.trials == 2
        with pytest.raises(ConfigurationError, match="T = 64.000"):
            spread_probability(torus24, 3, 4, 1, 64.0, (0, 0), reps=1, collision_time=64.0)

    def test_corner_placement(self, torus24):
        est = spread_probability(
            torus24, 30, 4, 1, 64.0, (1, 1), reps=10, seed=2, placement="corner"
        )
        assert est.estimate.trials == 10

    @pytest.mark.parametrize(
        "z, beta_time, placement",
        [((2, 0), 64.0, "uniform"), ((1,), 64.0, "uniform"), ((0, 0), 5.0, "uniform"),
         ((0, 0), 64.0, "diagonal")],
    )
    def test_rejects_bad_geometry(self, torus24, z, beta_time, placement):
        with pytest.raises(ConfigurationError):
            spread_probability(torus24, 3, 4, 1, beta_time, z, reps=1, placement=placement)

    def test_fit_recovers_rate(self):
        estimates = []
        for n in (1, 2, 3, 4):
            trials = 1_000_000
            successes = round(trials * (1 - math.exp(-0.3 * n)))
            estimates.append(
                SpreadEstimate(N=n, z=(0, 0), estimate=wilson_interval(successes, trials))
            )
        fit = fit_spread_rate(estimates)
        assert fit.c_p == pytest.approx(0.3, rel=1e-3)
