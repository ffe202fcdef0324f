# -*- coding: utf-8 -*-
import numpy as np
import pytest

from turbwig.background import BackgroundModel
from turbwig.background import GradedIndexProfile
from turbwig.beam import gaussian_beam
from turbwig.exceptions import AliasingError
from turbwig.exceptions import DimensionError
from turbwig.exceptions import RegimeViolation
from turbwig.exceptions import ResourceCeilingError
from turbwig.grid import SimGrid
from turbwig.moments import MAX_MEMORY_BYTES
from turbwig.moments import Regime
from turbwig.moments import WhiteNoiseModel
from turbwig.moments import apply_Q0_liouville
from turbwig.moments import apply_Q0_wm
from turbwig.moments import apply_Q_cross
from turbwig.moments import check_aliasing
from turbwig.moments import evaluate_at
from turbwig.moments import from_y
from turbwig.moments import g_function
from turbwig.moments import momentum_moments
from turbwig.moments import smooth
from turbwig.moments import solve_mean_liouville
from turbwig.moments import solve_mean_wm
from turbwig.moments import to_y
from turbwig.moments import two_point_memory
from turbwig.spectra import SpectrumForm
from turbwig.spectra import SpectrumModel
from turbwig.wigner import PhaseSpaceGrid
from turbwig.wigner import WignerGrid
from turbwig.wigner import gaussian_density
from turbwig.wigner import transport_free
from turbwig.wigner import wigner_transform


def test_y_transform_inverts(phase: PhaseSpaceGrid) -> None:
    """Test that from_y undoes to_y"""
    density = gaussian_density(phase, covariance=(0.25, 0.25, 0.0))
    restored = from_y(to_y(density.values, phase), phase).real
    assert np.allclose(restored, density.values, atol=1e-12)


def test_zero_amplitude_is_free_transport(grid: SimGrid) -> None:
    """Test that a vanishing medium reduces the mean solver to free transport"""
    spectrum = SpectrumModel(H=1 / 3, eta=1.0, amplitude=0.0)
    model = WhiteNoiseModel(regime=Regime.WIGNER_MOYAL, spectrum=spectrum, gamma=1.0)
    initial = wigner_transform(gaussian_beam(grid, width=1.0, momentum=0.5))
    solved = solve_mean_wm(initial, model, 0.5)
    expected = transport_free(initial, 0.5, 1.0)
    assert np.max(np.abs(solved.values - expected.values)) < 1e-6
    assert solved.z == pytest.approx(0.5)


def test_wigner_moyal_conserves_mass(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that the mean Wigner distribution keeps its mass and loses L2 norm"""
    model = WhiteNoiseModel(
        regime=Regime.WIGNER_MOYAL,
        spectrum=von_karman.copy(update={"amplitude": 0.1}),
        gamma=1.0,
    )
    initial = wigner_transform(gaussian_beam(grid, width=1.0))
    solved = solve_mean_wm(initial, model, 0.5)
    assert solved.mass == pytest.approx(initial.mass, rel=1e-10)
    assert solved.l2_norm() < initial.l2_norm()
    assert solved.method == "mean_wm"


def test_liouville_variance_laws(
    phase: PhaseSpaceGrid, liouville_model: WhiteNoiseModel
) -> None:
    """Test Var_p and Var_x of the kinetic Fokker-Planck solution"""
    var_x0, var_p0, cov0 = 0.25, 0.25, 0.05
    initial = gaussian_density(phase, covariance=(var_x0, var_p0, cov0))
    d0 = liouville_model.diffusion_origin()
    z = 1.0
    solved = solve_mean_liouville(initial, liouville_model, z)
    mass, var_p, var_x, cov = momentum_moments(solved.as_wigner())
    assert mass == pytest.approx(1.0, rel=1e-8)
    assert var_p == pytest.approx(var_p0 + d0 * z, rel=1e-6)
    assert var_x == pytest.approx(
        var_x0 + 2 * cov0 * z + var_p0 * z**2 + d0 * z**3 / 3, rel=1e-6
    )
    assert cov == pytest.approx(cov0 + var_p0 * z + d0 * z**2 / 2, rel=1e-6)


def test_wigner_moyal_generator_tends_to_liouville(
    smooth_spectrum: SpectrumModel,
) -> None:
    """Test that Q0 of the Wigner-Moyal model approaches D(0) d^2/dp^2 like gamma^2"""
    phase = PhaseSpaceGrid(points=128, dx=0.25, dp=0.25, gamma=1.0)
    centres = [(0.0, 0.0), (1.0, -0.5), (-2.0, 1.0), (0.5, 2.0), (3.0, 0.0)]
    errors = []
    for gamma in (0.02, 0.01):
        model = WhiteNoiseModel(
            regime=Regime.WIGNER_MOYAL, spectrum=smooth_spectrum, gamma=gamma
        )
        total = 0.0
        for centre in centres:
            theta = gaussian_density(phase, centre, (1.0, 0.6, 0.1))
            wm = apply_Q0_wm(theta, model).values
            limit = apply_Q0_liouville(theta, model).values
            total += np.linalg.norm(wm - limit) / np.linalg.norm(limit)
        errors.append(total / len(centres))
    assert errors[0] < 0.1
    assert 2.8 <= errors[0] / errors[1] <= 5.2


def test_g_function_small_separation(smooth_spectrum: SpectrumModel) -> None:
    """Test g(y) close to D(0) y^2 for small gamma*y"""
    model = WhiteNoiseModel(
        regime=Regime.WIGNER_MOYAL, spectrum=smooth_spectrum, gamma=1e-3
    )
    y = np.array([0.0, 0.5, 1.0])
    values = g_function(model, y)
    assert values[0] == 0.0
    assert values[1:] == pytest.approx(model.diffusion_origin() * y[1:] ** 2, rel=1e-4)


@pytest.mark.parametrize("regime", [Regime.LIOUVILLE, Regime.WIGNER_MOYAL])
def test_covariance_operator_is_negative(
    regime: Regime, phase: PhaseSpaceGrid, smooth_spectrum: SpectrumModel
) -> None:
    """Test that <theta, Q0 theta> is never positive"""
    model = WhiteNoiseModel(regime=regime, spectrum=smooth_spectrum, gamma=1.0)
    apply = apply_Q0_liouville if regime == Regime.LIOUVILLE else apply_Q0_wm
    rng = np.random.default_rng(11)
    for _ in range(20):
        theta = WignerGrid(values=rng.standard_normal(phase.shape), phase=phase)
        pairing = float(np.sum(theta.values * apply(theta, model).values))
        assert pairing <= 1e-10 * float(np.sum(theta.values**2))


def test_mean_solvers_contract(
    phase: PhaseSpaceGrid,
    smooth_spectrum: SpectrumModel,
    liouville_model: WhiteNoiseModel,
) -> None:
    """Test that the mean solutions never gain L2 norm"""
    initial = gaussian_density(phase, covariance=(0.25, 0.25, 0.0))
    wm_model = WhiteNoiseModel(
        regime=Regime.WIGNER_MOYAL, spectrum=smooth_spectrum, gamma=1.0
    )
    for z in (0.25, 1.0):
        for solved in (
            solve_mean_wm(initial, wm_model, z),
            solve_mean_liouville(initial, liouville_model, z),
        ):
            assert solved.l2_norm() < initial.l2_norm()


def test_cross_kernel_memory_ceiling(smooth_spectrum: SpectrumModel) -> None:
    """Test that oversized two-point kernels are refused before allocation"""
    phase = PhaseSpaceGrid(points=16, dx=0.5, dp=0.5, gamma=1.0)
    model = WhiteNoiseModel(regime=Regime.LIOUVILLE, spectrum=smooth_spectrum)
    theta = gaussian_density(phase, covariance=(1.0, 1.0, 0.0))
    with pytest.raises(ResourceCeilingError):
        apply_Q_cross(theta, theta, model, max_memory_bytes=1e5)
    assert two_point_memory(16) == 8.0 * 16**4 * 6
    assert two_point_memory(256) > MAX_MEMORY_BYTES


@pytest.mark.parametrize("regime", [Regime.LIOUVILLE, Regime.WIGNER_MOYAL])
def test_cross_kernel_symmetry(regime: Regime, smooth_spectrum: SpectrumModel) -> None:
    """Test that the cross kernel of theta with itself is symmetric in its pairs"""
    phase = PhaseSpaceGrid(points=16, dx=0.5, dp=0.5, gamma=1.0)
    model = WhiteNoiseModel(regime=regime, spectrum=smooth_spectrum, gamma=0.5)
    theta = gaussian_density(phase, (0.5, 0.0), (1.0, 1.0, 0.2))
    kernel = apply_Q_cross(theta, theta, model)
    assert kernel.values.shape == (16, 16, 16, 16)
    assert np.allclose(
        kernel.values, kernel.values.transpose(2, 3, 0, 1), atol=1e-12
    )
    assert kernel.regime == regime


def test_aliasing_is_detected(phase: PhaseSpaceGrid) -> None:
    """Test that rough initial data is refused"""
    rng = np.random.default_rng(0)
    noise = WignerGrid(values=rng.standard_normal(phase.shape), phase=phase)
    with pytest.raises(AliasingError):
        check_aliasing(noise)
    check_aliasing(gaussian_density(phase, covariance=(0.25, 0.25, 0.0)))


def test_regime_checks(
    phase: PhaseSpaceGrid, smooth_spectrum: SpectrumModel
) -> None:
    """Test the regime preconditions of the mean solvers"""
    initial = gaussian_density(phase, covariance=(0.25, 0.25, 0.0))
    inhomogeneous = WhiteNoiseModel(
        regime=Regime.LIOUVILLE,
        spectrum=smooth_spectrum,
        background=BackgroundModel(v0=GradedIndexProfile(omega=1.0)),
    )
    with pytest.raises(RegimeViolation):
        solve_mean_liouville(initial, inhomogeneous, 1.0)
    with pytest.raises(RegimeViolation):
        solve_mean_wm(initial, inhomogeneous, 1.0)
    two_dimensional = WhiteNoiseModel(
        regime=Regime.LIOUVILLE, spectrum=smooth_spectrum.copy(update={"dim": 2})
    )
    with pytest.raises(DimensionError):
        solve_mean_liouville(initial, two_dimensional, 1.0)


def test_model_admissibility() -> None:
    """Test the admissibility conditions of the white-noise models"""
    rough = SpectrumModel(form=SpectrumForm.POWER_LAW_BOUNDED, H=0.6, eta=0.0)
    with pytest.raises(RegimeViolation):
        WhiteNoiseModel(regime=Regime.WIGNER_MOYAL, spectrum=rough, gamma=1.0)
    with pytest.raises(RegimeViolation):
        WhiteNoiseModel(
            regime=Regime.WIGNER_MOYAL, spectrum=SpectrumModel(H=1 / 3, eta=1.0)
        )
    with pytest.raises(RegimeViolation):
        WhiteNoiseModel(
            regime=Regime.LIOUVILLE, spectrum=SpectrumModel(H=1 / 3, eta=1.0)
        )


def test_probe_helpers(phase: PhaseSpaceGrid) -> None:
    """Test interpolation and smoothing at probe points"""
    density = gaussian_density(phase, covariance=(0.25, 0.25, 0.0))
    points = np.array([[0.0, 0.0], [0.25, -0.3]])
    values = evaluate_at(density, points)
    assert values[0] == pytest.approx(1 / (2 * np.pi * 0.25), rel=1e-8)
    smoothed = evaluate_at(smooth(density, (0.5, 0.5)), points[:1])
    assert smoothed[0] == pytest.approx(1 / (2 * np.pi * 0.5), rel=1e-6)
    with pytest.raises(ValueError):
        evaluate_at(density, np.array([[100.0, 0.0]]))
