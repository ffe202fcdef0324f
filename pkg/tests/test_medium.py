# -*- coding: utf-8 -*-
import numpy as np
import pytest
from structlog.testing import capture_logs

from turbwig.beam import screen_variance
from turbwig.exceptions import DimensionError
from turbwig.exceptions import DivergentIntegralError
from turbwig.exceptions import EstimatorError
from turbwig.exceptions import OutOfRangeError
from turbwig.grid import SimGrid
from turbwig.medium import empirical_covariance
from turbwig.medium import grid_covariance
from turbwig.medium import increment_bound
from turbwig.medium import increment_rho_sweep
from turbwig.medium import increment_variance_check
from turbwig.medium import sample_scaled
from turbwig.medium import synthesize_screens
from turbwig.medium import synthesize_slices
from turbwig.medium import synthesize_volume
from turbwig.spectra import SpectrumForm
from turbwig.spectra import SpectrumModel


def test_volume_is_deterministic(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that seed and stream index fix the realization"""
    first = synthesize_volume(von_karman, grid, 8, seed=5, index=2)
    second = synthesize_volume(von_karman, grid, 8, seed=5, index=2)
    other = synthesize_volume(von_karman, grid, 8, seed=5, index=3)
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)
    assert first.values.shape == (8, 256)
    assert np.isrealobj(first.values)


def test_slice_at_interpolates(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that reads between slices are linear and reads outside raise"""
    realization = synthesize_volume(von_karman, grid, 4, seed=1, dz_field=0.5)
    assert np.array_equal(realization.slice_at(0.5), realization.values[1])
    middle = 0.5 * (realization.values[1] + realization.values[2])
    assert np.allclose(realization.slice_at(0.75), middle)
    assert realization.z_range == (0.0, 1.5)
    with pytest.raises(OutOfRangeError):
        realization.slice_at(1.6)
    with pytest.raises(OutOfRangeError):
        realization.slice_at(-0.1)


def test_slice_at_uses_scaled_distance(von_karman: SpectrumModel) -> None:
    """Test that slice_at reads V(z/epsilon^2)"""
    grid = SimGrid(points=64, length=8.0, epsilon=0.5)
    realization = synthesize_volume(von_karman, grid, 9, seed=1, dz_field=1.0)
    assert realization.z_range == (0.0, 2.0)
    assert np.array_equal(realization.slice_at(0.25), realization.values[1])
    assert np.array_equal(sample_scaled(realization, 0.25), realization.values[1])
    assert sample_scaled(realization, 0.5, [3]) == realization.values[2, 3]


def test_zero_amplitude_gives_zero_field(grid: SimGrid) -> None:
    """Test that a vanishing amplitude synthesizes an identically zero field"""
    model = SpectrumModel(H=1 / 3, eta=1.0, amplitude=0.0)
    assert not np.any(synthesize_volume(model, grid, 3, seed=0).values)
    assert not np.any(synthesize_screens(model, grid, 3, 0.1, seed=0).screens)


def test_infrared_divergence_needs_truncation(grid: SimGrid) -> None:
    """Test that eta = 0 needs an explicit zero-mode truncation"""
    model = SpectrumModel(form=SpectrumForm.POWER_LAW_BOUNDED, H=1 / 3, eta=0.0)
    with pytest.raises(DivergentIntegralError):
        synthesize_volume(model, grid, 4, seed=0)
    realization = synthesize_volume(model, grid, 4, seed=0, truncate_infrared=True)
    assert np.all(np.isfinite(realization.values))


def test_dimension_mismatch(grid: SimGrid) -> None:
    """Test that a two-dimensional spectrum refuses a one-dimensional grid"""
    model = SpectrumModel(H=1 / 3, eta=1.0, dim=2)
    with pytest.raises(DimensionError):
        synthesize_volume(model, grid, 4, seed=0)


def test_unresolved_inner_scale_warns(von_karman: SpectrumModel) -> None:
    """Test the warning when the grid does not resolve rho"""
    grid = SimGrid(points=16, length=16.0)
    model = von_karman.copy(update={"rho": 100.0})
    with capture_logs() as cap_logs:
        synthesize_volume(model, grid, 2, seed=0)
    events = [log["event"] for log in cap_logs]
    assert "Grid does not resolve the ultraviolet cutoff" in events


def test_slice_covariance_matches_grid(
    grid: SimGrid, von_karman: SpectrumModel
) -> None:
    """Test the empirical lag covariance against the exact grid covariance"""
    lags = [0, 4, 8, 16]
    slices = synthesize_slices(von_karman, grid, 400, seed=11)
    estimate = empirical_covariance(slices, lags, dx=grid.dx)
    expected = grid_covariance(von_karman, grid, lags)
    assert estimate.samples == 400
    assert np.allclose(estimate.separations, np.array(lags) * grid.dx)
    assert np.all(np.abs(estimate.values - expected) < 4 * estimate.standard_errors)
    # the grid drops the zero mode and everything beyond Nyquist
    assert 0 < expected[0] < 1


def test_empirical_covariance_limits(grid: SimGrid) -> None:
    """Test the estimator preconditions"""
    data = np.zeros((1, grid.points))
    with pytest.raises(EstimatorError):
        empirical_covariance(data, [0])
    data = np.zeros((3, grid.points))
    with pytest.raises(EstimatorError):
        empirical_covariance(data, [grid.points // 2 + 1])


def test_screen_variance(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test the pointwise screen variance against the mode sum"""
    dz = 0.01
    screens = synthesize_screens(von_karman, grid, 400, dz, seed=3)
    expected = screen_variance(von_karman, grid, dz)
    assert screens.nsteps == 400
    assert np.mean(screens.screens**2) == pytest.approx(expected, rel=0.1)


@pytest.mark.parametrize("H", [0.25, 1 / 3, 0.5])
def test_increment_rho_scaling(H: float) -> None:
    """Test that E[(delta V)^2]/gamma^2 grows like rho^(2-2H) for gamma*rho < 1"""
    model = SpectrumModel(H=H, eta=1.0, rho=20.0)
    fit = increment_rho_sweep(model, 1e-3, np.geomspace(20, 200, 4))
    assert fit.expected == pytest.approx(2 - 2 * H)
    assert fit.slope == pytest.approx(2 - 2 * H, abs=0.2)


def test_increment_variance_check() -> None:
    """Test quadrature, grid sum and Monte Carlo agree"""
    model = SpectrumModel(H=1 / 3, eta=1.0, rho=8.0)
    report = increment_variance_check(model, 0.5, [1.0], samples=200, seed=2)
    assert report.in_regime
    assert report.separation == 0.5
    assert report.grid_sum == pytest.approx(report.quadrature, rel=0.05)
    assert abs(report.z_score) < 4
    assert report.bound == pytest.approx(increment_bound(model, 0.5))


def test_increment_variance_outside_regime_warns() -> None:
    """Test the warning outside gamma, eta <= 1 <= rho"""
    model = SpectrumModel(H=1 / 3, eta=2.0)
    with capture_logs() as cap_logs:
        report = increment_variance_check(model, 0.5, [0.0], samples=0)
    assert not report.in_regime
    assert report.quadrature == 0.0
    assert cap_logs[0]["event"] == (
        "Increment variance outside the gamma, eta <= 1 <= rho regime"
    )
