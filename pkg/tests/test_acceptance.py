"""Desk-scale acceptance checks. Run with ``pytest -m slow``."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from src.epidemic.cells import collision_scan, fit_spread_rate, spread_probability
from src.epidemic.chernoff import chernoff_grid
from src.epidemic.dynamics import run_si, run_sis
from src.epidemic.front import front_speed
from src.epidemic.models import CellEventSpec
from src.lattice.field import sample_conductances
from src.lattice.models import LatticeBox, LawSpec
from src.mixing.cloud import evolve_cloud, sample_cloud
from src.mixing.confined import kernel_oscillation_check
from src.mixing.experiment import MixingParams, mixing_curve
from src.mixing.soft_local_times import soft_local_time_coupling
from src.spectral.bounds import gaussian_bound_fit
from src.spectral.harnack import harnack_constant, oscillation_decay_check
from src.spectral.heat_kernel import (
    chapman_kolmogorov_error,
    dense_kernel_oracle,
    heat_kernel_exact,
)
from src.spectral.poincare import poincare_constant
from src.surface.fields import simulate_iid_field
from src.surface.relaxation import (
    brute_force_min_surface,
    is_minimal,
    min_lipschitz_surface,
    two_sided_surface,
)
from src.surface.surrounds import surrounds_origin
from src.utils.stats import poisson_dispersion_test, wilson_interval
from src.walk.ensemble import advance
from src.walk.exit_times import fit_exit_tail

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def elliptic_torus():
    return sample_conductances(LatticeBox(d=2, side=8), LawSpec.uniform_elliptic(2.0), seed=21)


@pytest.fixture(scope="module")
def constant64():
    return sample_conductances(LatticeBox(d=2, side=64), LawSpec.constant(1.0), seed=0)


def test_heat_kernel_exactness():
    fld = sample_conductances(LatticeBox(d=2, side=8), LawSpec.constant(1.0), seed=0)
    sources = np.arange(fld.box.n_vertices)
    table = heat_kernel_exact(fld, 3.0, sources)
    assert np.abs(table.p - dense_kernel_oracle(fld, 3.0, sources)).max() < 1e-9
    assert table.symmetry_error() < 1e-10
    assert np.abs(table.mass() - 1.0).max() < 1e-9
    assert chapman_kolmogorov_error(fld, 1.0, 2.0) < 1e-8


def test_walk_endpoints_match_kernel(elliptic_torus):
    n, t = 100_000, 2.0
    x = elliptic_torus.box.origin
    batch = advance(elliptic_torus, np.full(n, x), t, np.random.default_rng(5))
    counts = np.bincount(batch.final, minlength=elliptic_torus.box.n_vertices)
    p = heat_kernel_exact(elliptic_torus, t, [x]).p[0]
    sigma = np.sqrt(n * p * (1 - p))
    within = np.abs(counts - n * p) <= 4 * sigma + 1e-9
    assert within.mean() >= 0.99


def test_gaussian_bounds_fit_the_exact_kernel(constant64):
    times, radii = [8.0, 16.0, 32.0, 64.0, 128.0], [1, 2, 3, 4, 6, 8, 10, 12]
    fit = gaussian_bound_fit(constant64, times, radii)
    assert fit.r_squared >= 0.95
    assert fit.upper_violations == 0
    assert fit.lower_violations == 0
    assert fit.c2 > 0
    assert fit.c4 > 0


def test_exit_tail_is_log_linear(constant64):
    result = fit_exit_tail(
        constant64, constant64.box.origin, [10, 15, 20, 25, 30], [5.0, 10.0, 20.0, 50.0],
        10_000, seed=0,
    )
    assert result.fit is not None
    assert result.c4 > 0
    assert result.fit.r_squared >= 0.9


def test_poincare_eigensolver_dominates_random_functions(elliptic_torus, two_vertex_field):
    assert poincare_constant(two_vertex_field, 0, 1, c_w=2.0).c_p == pytest.approx(0.5, abs=1e-9)
    # outer ball of radius 2 around the origin stays inside the 8-torus
    result = poincare_constant(elliptic_torus, elliptic_torus.box.origin, 1, c_w=2.0)
    rng = np.random.default_rng(0)
    size = result.problem.outer.size
    ratios = [result.problem.ratio(rng.normal(size=size)) for _ in range(10_000)]
    assert max(ratios) <= result.c_p * (1 + 1e-9)


def test_oscillation_decays_on_dyadic_scales(constant64):
    x = constant64.box.origin
    est = harnack_constant(constant64, x, 8)
    assert np.isfinite(est.c_h) and est.c_h > 1
    assert np.isfinite(est.theta) and est.theta > 0
    report = oscillation_decay_check(constant64, x, 16, c_h=est.c_h)
    assert report.scales == [16, 8, 4, 2]
    assert report.passes(0.05)


def test_soft_local_time_marginals():
    g = np.array([0.1, 0.2, 0.3, 0.4])
    n = 10_000
    report = soft_local_time_coupling(np.zeros(n, dtype=int), g[None, :], np.zeros(4), seed=8)
    observed = np.bincount(report.endpoints, minlength=4)
    assert stats.chisquare(observed, n * g).pvalue > 0.01
    assert stats.kstest(report.xi, "expon").pvalue > 0.01


def test_mixing_success_grows_with_delta(constant64):
    params = MixingParams(K=64, ell=8, Kprime=16, beta=1.0, eps=0.5)
    curve = mixing_curve(constant64, params, [64.0, 256.0, 1024.0], reps=50, seed=0)
    estimates = [result.estimate for result in curve]
    for a, b in zip(estimates, estimates[1:]):
        assert b.value >= a.value
        assert b.low >= a.low
        assert b.high >= a.high
    assert estimates[-1].value >= 0.9
    assert all(rep.contained for result in curve for rep in result.reps if rep.success)


def test_confined_kernel_oscillation_decays(constant64):
    report = kernel_oscillation_check(
        constant64, [64.0, 128.0, 256.0], None, ell=4, theta=0.5, rho_factor=2.0
    )
    assert all(osc > 0 for osc in report.oscillations)
    assert report.slope <= -1.0


def test_stationary_cloud():
    fld = sample_conductances(LatticeBox(d=2, side=32), LawSpec.uniform_elliptic(2.0), seed=3)
    cloud = sample_cloud(fld, 2.0, seed=0)
    clock = 0.0
    for t in (10.0, 50.0):
        cloud = evolve_cloud(fld, cloud, t - clock, seed=int(t)).cloud
        clock = t
        counts = cloud.counts(fld.box.n_vertices)
        assert poisson_dispersion_test(counts, 2.0 * fld.mu) > 0.01


def test_sis_without_recovery_is_si():
    fld = sample_conductances(LatticeBox(d=2, side=24), LawSpec.uniform_elliptic(2.0), seed=4)
    si = run_si(fld, 2.0, 40.0, seed=9)
    sis = run_sis(fld, 2.0, 0.0, 40.0, seed=9)
    assert si.series.front == sis.series.front
    assert si.series.infected_count == sis.series.infected_count
    assert [e.time for e in si.trace] == [e.time for e in sis.trace]


def test_si_front_moves_linearly():
    fld = sample_conductances(LatticeBox(d=2, side=200), LawSpec.constant(1.0), seed=0)
    times = np.linspace(0.0, 400.0, 101)
    good = 0
    for seed in range(10):
        run = run_si(fld, 2.0, 400.0, seed=seed, sample_times=times, slab=4.0, keep_trace=False)
        fit = front_speed(run.series)
        good += fit.positive and fit.r_squared >= 0.9
    assert good >= 9


def test_sis_survival_falls_with_recovery_rate():
    fld = sample_conductances(LatticeBox(d=2, side=24), LawSpec.constant(1.0), seed=0)
    estimates = []
    for gamma in (0.001, 0.01, 0.1, 1.0):
        survived = sum(
            not run_sis(
                fld, 2.0, gamma, 100.0, seed=seed, sample_times=[0.0, 100.0], keep_trace=False
            ).series.extinct
            for seed in range(20)
        )
        estimates.append(wilson_interval(survived, 20))
    for a, b in zip(estimates, estimates[1:]):
        assert b.value <= a.value
        assert b.low <= a.low
        assert b.high <= a.high


def test_collision_count_grows_with_cell_size():
    fld = sample_conductances(LatticeBox(d=2, side=48), LawSpec.constant(1.0), seed=0)
    scan = collision_scan(fld, CellEventSpec(eta=1, lambda0=4.0), [4, 8, 16], reps=20, seed=0)
    assert scan.means == sorted(scan.means)
    assert scan.exponent >= 0.2


def test_spread_failure_is_log_linear_in_n():
    fld = sample_conductances(LatticeBox(d=2, side=40), LawSpec.constant(1.0), seed=0)
    estimates = [
        spread_probability(fld, n, 8, 2, 256.0, (2, 2), 1000, seed=n) for n in (5, 10, 20)
    ]
    fit = fit_spread_rate(estimates)
    assert fit.fit is not None
    assert fit.c_p > 0
    assert fit.fit.r_squared >= 0.8


def test_chernoff_bounds_dominate():
    checks = chernoff_grid([1.0, 10.0, 100.0], [round(0.1 * k, 1) for k in range(1, 10)])
    assert len(checks) == 27
    assert all(c.holds for c in checks)


def test_relaxation_equals_exhaustive_search():
    for seed in range(200):
        cells = simulate_iid_field(0.3, (4, 4), 4, seed=seed)
        for side in ("plus", "minus"):
            fast = min_lipschitz_surface(cells, side)
            slow = brute_force_min_surface(cells, side)
            if slow is None:
                assert fast is None
                continue
            assert np.array_equal(fast, slow)
            assert is_minimal(cells, fast, side)


def test_sparse_bad_cells_admit_surrounding_surface():
    hits = 0
    for seed in range(100):
        cells = simulate_iid_field(0.01, (32, 32), 16, seed=seed)
        surface = two_sided_surface(cells)
        hits += surface.exists and surrounds_origin(surface, cells, 8)
    assert hits >= 95
