# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest
from scipy import fft
from structlog.testing import capture_logs

from turbwig.beam import ComplexBeam
from turbwig.beam import fresnel_gaussian
from turbwig.beam import gaussian_beam
from turbwig.exceptions import DimensionError
from turbwig.exceptions import GridAlignmentError
from turbwig.grid import SimGrid
from turbwig.wigner import PhaseSpaceGrid
from turbwig.wigner import gaussian_density
from turbwig.wigner import marginals_and_flux
from turbwig.wigner import mixed_state_wigner
from turbwig.wigner import sup_norm_bound
from turbwig.wigner import transport_free
from turbwig.wigner import wigner_transform
from turbwig.wigner import wkb_ensemble
from turbwig.wigner import wkb_target

BEAMS = [
    # width, centre, momentum, chirp
    (1.0, 0.0, 0.0, 0.0),
    (0.7, 2.0, 0.0, 0.0),
    (1.0, -1.0, 1.5, 0.0),
    (1.5, 0.0, -1.0, 0.3),
    (0.8, 1.0, 0.5, -0.2),
]


def gradient_norm_squared(beam: ComplexBeam) -> float:
    coefficients = fft.fft(beam.values)
    q = beam.grid.wavenumbers()
    energy = np.sum(np.abs(coefficients) ** 2 * q**2)
    return float(energy / beam.values.size * beam.grid.dx)


@pytest.mark.parametrize("width,centre,momentum,chirp", BEAMS)
def test_mass_marginal_is_exact(
    grid: SimGrid, width: float, centre: float, momentum: float, chirp: float
) -> None:
    """Test that the p-marginal of W is |Psi|^2"""
    beam = gaussian_beam(grid, width, centre, momentum, chirp)
    wigner = wigner_transform(beam)
    marginals = marginals_and_flux(wigner)
    assert np.max(np.abs(marginals.mass - np.abs(beam.values) ** 2)) < 1e-12
    assert wigner.mass == pytest.approx(1.0, abs=1e-10)
    assert wigner.imaginary_residue < 1e-10


@pytest.mark.parametrize("width,centre,momentum,chirp", BEAMS)
def test_norm_identity(
    grid: SimGrid, width: float, centre: float, momentum: float, chirp: float
) -> None:
    """Test ||W||_2 = (2 pi gamma)^(-1/2) ||Psi||^2"""
    beam = gaussian_beam(grid, width, centre, momentum, chirp)
    wigner = wigner_transform(beam)
    expected = 1 / math.sqrt(2 * math.pi * grid.gamma)
    assert wigner.l2_norm() == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("width,centre,momentum,chirp", BEAMS)
def test_second_moment(
    grid: SimGrid, width: float, centre: float, momentum: float, chirp: float
) -> None:
    """Test that the p^2 moment of W is gamma^2 ||grad Psi||^2"""
    beam = gaussian_beam(grid, width, centre, momentum, chirp)
    wigner = wigner_transform(beam)
    second = float(np.sum(marginals_and_flux(wigner).second_moment) * grid.dx)
    expected = grid.gamma**2 * gradient_norm_squared(beam)
    assert second == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("width,centre,momentum,chirp", BEAMS)
def test_free_transport(
    grid: SimGrid, width: float, centre: float, momentum: float, chirp: float
) -> None:
    """Test that free propagation shears the Wigner distribution"""
    beam = gaussian_beam(grid, width, centre, momentum, chirp)
    propagated = fresnel_gaussian(grid, 0.5, width, centre, momentum, chirp)
    expected = transport_free(wigner_transform(beam), 0.5, grid.ktilde)
    actual = wigner_transform(propagated)
    scale = float(np.max(np.abs(actual.values)))
    assert np.max(np.abs(actual.values - expected.values)) < 1e-4 * scale
    assert expected.z == pytest.approx(0.5)


def test_sup_norm_bound_holds(grid: SimGrid) -> None:
    """Test that no beam triggers the sup-norm warning"""
    with capture_logs() as cap_logs:
        for width, centre, momentum, chirp in BEAMS:
            beam = gaussian_beam(grid, width, centre, momentum, chirp)
            wigner = wigner_transform(beam)
            assert np.max(np.abs(wigner.values)) <= sup_norm_bound(1.0, 1.0) * (
                1 + 1e-8
            )
    assert not [log for log in cap_logs if log["log_level"] == "warning"]


def test_coherent_state_saturates_bound(grid: SimGrid) -> None:
    """Test that the Gaussian reaches 1/(pi gamma) at its centre"""
    wigner = wigner_transform(gaussian_beam(grid))
    assert float(wigner.values.max()) == pytest.approx(1 / math.pi, rel=1e-8)


def test_target_grid_alignment(grid: SimGrid) -> None:
    """Test that a target grid needs dp N dx = pi gamma"""
    beam = gaussian_beam(grid)
    target = PhaseSpaceGrid.for_grid(grid)
    assert target.admissible_gamma == pytest.approx(1.0)
    assert wigner_transform(beam, target=target).phase == target
    misaligned = PhaseSpaceGrid.for_grid(grid, gamma=2.0)
    with pytest.raises(GridAlignmentError) as excinfo:
        wigner_transform(beam, target=misaligned)
    assert excinfo.value.admissible == [pytest.approx(2.0)]


def test_two_dimensional_beam_is_refused() -> None:
    """Test that the Wigner grid is one-dimensional"""
    grid = SimGrid(dim=2, points=16, length=8.0)
    with pytest.raises(DimensionError):
        wigner_transform(gaussian_beam(grid))


def test_mixed_state(grid: SimGrid) -> None:
    """Test mixtures and their weight validation"""
    beams = [gaussian_beam(grid, centre=-2.0), gaussian_beam(grid, centre=2.0)]
    mixed = mixed_state_wigner(beams, [0.25, 0.75])
    assert mixed.mass == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        mixed_state_wigner(beams, [0.5, 0.6])
    with pytest.raises(ValueError):
        mixed_state_wigner(beams, [1.5, -0.5])
    with pytest.raises(ValueError):
        mixed_state_wigner(beams, [1.0])


def test_wkb_ensemble_approaches_target(grid: SimGrid) -> None:
    """Test that the packet mixture carries the WKB momentum"""

    def amplitude(x: np.ndarray) -> np.ndarray:
        return np.exp(-(x**2) / 8)

    def phase_gradient(x: np.ndarray) -> np.ndarray:
        return 0.5 * np.ones_like(x)

    beams, weights = wkb_ensemble(
        grid, amplitude, phase_gradient, packet_width=1.0, jitter=0.0, count=40, seed=1
    )
    assert weights.sum() == pytest.approx(1.0)
    mixed = mixed_state_wigner(beams, weights)
    flux = float(np.sum(marginals_and_flux(mixed).flux) * grid.dx)
    assert flux == pytest.approx(0.5, abs=1e-6)
    target = wkb_target(mixed.phase, amplitude, phase_gradient, width=0.5)
    assert target.values.shape == mixed.values.shape


def test_gaussian_density_moments(phase: PhaseSpaceGrid) -> None:
    """Test the normalization and the covariance check of gaussian_density"""
    density = gaussian_density(phase, (0.5, -0.5), (0.3, 0.2, 0.1), mass=2.0)
    assert density.mass == pytest.approx(2.0, rel=1e-8)
    with pytest.raises(ValueError):
        gaussian_density(phase, covariance=(0.1, 0.1, 0.2))
