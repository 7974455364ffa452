"""Tests for exact heat kernels, Gaussian fits, Harnack estimates and Poincare constants."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.lattice.field import sample_conductances
from src.lattice.models import LatticeBox, LawSpec
from src.spectral.bounds import diagonal_decay, gaussian_bound_fit
from src.spectral.harnack import (
    CylinderPart,
    SpaceTimeCylinder,
    harnack_constant,
    oscillation_decay_check,
    theta,
)
from src.spectral.heat_kernel import (
    chapman_kolmogorov_error,
    check_caloric,
    dense_kernel_oracle,
    heat_kernel_exact,
    heat_kernel_series,
    truncation_point,
)
from src.spectral.poincare import goodness_scan, poincare_constant


# ---------------------------------------------------------------------------
#  Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def small_field():
    return sample_conductances(LatticeBox(d=2, side=6), LawSpec.uniform_elliptic(2.0), seed=1)


@pytest.fixture
def large_constant():
    return sample_conductances(LatticeBox(d=2, side=32), LawSpec.constant(1.0), seed=0)


class TestHeatKernel:
    @pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
    def test_two_vertex_closed_form(self, two_vertex_field, t):
        table = heat_kernel_exact(two_vertex_field, t, [0])
        assert table.q(0, 0) == pytest.approx((1 + math.exp(-2 * t)) / 2, abs=1e-10)
        assert table.q(0, 2) == pytest.approx((1 - math.exp(-2 * t)) / 2, abs=1e-10)
        assert table.q(0, 1) == 0.0

    def test_zero_time_is_identity(self, small_field):
        table = heat_kernel_exact(small_field, 0.0, [3])
        expected = np.zeros(small_field.box.n_vertices)
        expected[3] = 1.0
        assert np.allclose(table.p[0], expected)

    def test_mass_is_conserved(self, small_field):
        table = heat_kernel_exact(small_field, 4.0, [0, 7, 20])
        assert np.allclose(table.mass(), 1.0, atol=1e-10)
        assert table.truncation_error <= 1e-12

    def test_kernel_is_symmetric(self, small_field):
        table = heat_kernel_exact(small_field, 2.5, np.arange(small_field.box.n_vertices))
        assert table.symmetry_error() < 1e-12

    def test_matches_dense_oracle(self, small_field):
        sources = [0, 11, 35]
        table = heat_kernel_exact(small_field, 3.0, sources)
        assert np.abs(table.p - dense_kernel_oracle(small_field, 3.0, sources)).max() < 1e-10

    def test_chapman_kolmogorov(self, small_field):
        assert chapman_kolmogorov_error(small_field, 1.5, 2.0) < 1e-10

    def test_series_agrees_with_single_times(self, small_field):
        series = heat_kernel_series(small_field, [1.0, 2.0], [5])
        single = heat_kernel_exact(small_field, 2.0, [5])
        assert np.allclose(series[1].values, single.values, atol=1e-12)

    def test_isolated_source_rejected(self, two_vertex_field):
        with pytest.raises(ConfigurationError):
            heat_kernel_exact(two_vertex_field, 1.0, [1])

    def test_negative_time_rejected(self, small_field):
        with pytest.raises(ValueError):
            heat_kernel_exact(small_field, -1.0, [0])

    def test_unknown_source_row(self, small_field):
        table = heat_kernel_exact(small_field, 1.0, [0])
        with pytest.raises(KeyError):
            table.q(4, 0)

    def test_truncation_point_covers_tail(self):
        assert truncation_point(0.0, 1e-12) == 0
        assert truncation_point(10.0, 1e-12) > 10

    def test_caloric_residual_shrinks(self, small_field):
        table = heat_kernel_exact(small_field, 1.0, [0])
        (check,) = check_caloric(table)
        assert check.residual < 1e-5
        assert check.residual_half < check.residual

    def test_csv_lists_nonzero_entries(self, tmp_path, two_vertex_field):
        table = heat_kernel_exact(two_vertex_field, 1.0, [0])
        lines = table.to_csv(tmp_path / "kernel.csv").read_text().splitlines()
        assert lines[0] == "source,vertex,value"
        assert [line.split(",")[1] for line in lines[1:]] == ["0", "2"]


class TestGaussianFit:
    def test_fit_on_constant_lattice(self, large_constant):
        fit = gaussian_bound_fit(large_constant, [8.0, 16.0, 32.0], [1, 2, 3, 4, 6, 8])
        assert fit.upper_violations == 0
        assert fit.lower_violations == 0
        assert fit.c2 > 0
        assert fit.c1 > 0 and fit.c3 > 0
        assert fit.n_upper >= fit.n_lower >= 2

    def test_grid_outside_windows(self, large_constant):
        with pytest.raises(ValueError, match="validity window"):
            gaussian_bound_fit(large_constant, [0.5], [4])

    def test_diagonal_decay_levels_off(self, large_constant):
        scaled = diagonal_decay(large_constant, [16.0, 32.0])
        assert scaled[1] == pytest.approx(scaled[0], rel=0.1)


class TestHarnack:
    def test_theta_values(self):
        assert theta(2.0) == pytest.approx(1.0)
        assert math.isfinite(theta(1.0))
        assert theta(4.0) < theta(2.0)

    def test_cylinder_parts(self):
        cyl = SpaceTimeCylinder(center=0, R=4, T=16.0)
        assert cyl.sub(CylinderPart.EARLY).interval == (4.0, 8.0)
        assert cyl.sub(CylinderPart.LATE).interval == (12.0, 16.0)
        assert cyl.sub(CylinderPart.LATE).radius == 2

    def test_harnack_constant_at_least_one(self, uniform_torus):
        est = harnack_constant(uniform_torus, uniform_torus.box.origin, R=4, n_time=16)
        assert est.c_h >= 1.0
        assert est.ratios
        assert est.theta > 0

    def test_oscillation_never_grows(self, uniform_torus):
        report = oscillation_decay_check(uniform_torus, uniform_torus.box.origin, r0=4, n_time=16)
        assert report.scales == [4, 2]
        assert all(r <= 1 for r in report.ratios)
        assert report.passes()

    def test_oscillation_needs_scale(self, uniform_torus):
        with pytest.raises(ValueError):
            oscillation_decay_check(uniform_torus, 0, r0=1)


class TestPoincare:
    def test_two_vertex_constant_is_half(self, two_vertex_field):
        result = poincare_constant(two_vertex_field, 0, 1, c_w=2.0)
        assert result.finite
        assert result.c_p == pytest.approx(0.5)

    def test_extremal_attains_constant(self, uniform_torus):
        result = poincare_constant(uniform_torus, uniform_torus.box.origin, 2, c_w=2.0)
        assert result.c_p > 0
        assert result.problem.ratio(result.extremal) == pytest.approx(result.c_p, rel=1e-8)

    def test_outer_ball_wrapping_rejected(self, constant_torus):
        with pytest.raises(ConfigurationError, match="wraps"):
            poincare_constant(constant_torus, 0, 2, c_w=2.0)

    def test_goodness_thresholds(self, uniform_torus):
        x = uniform_torus.box.origin
        lenient = goodness_scan(uniform_torus, x, 2, c_v=0.0, c_p=math.inf, max_centers=4)
        assert lenient.n_b == 1
        assert lenient.very_good
        strict = goodness_scan(uniform_torus, x, 2, c_v=0.0, c_p=0.0, max_centers=4)
        assert strict.bad_radii == [1, 2]
        assert strict.n_b == 3
        assert not strict.very_good
