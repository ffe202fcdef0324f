# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from turbwig.background import BackgroundModel
from turbwig.background import GradedIndexProfile
from turbwig.beam import ComplexBeam
from turbwig.beam import SplitStepPropagator
from turbwig.beam import fresnel_gaussian
from turbwig.beam import gaussian_beam
from turbwig.beam import l2_norm
from turbwig.beam import mean_field_decay_rate
from turbwig.beam import require_confined
from turbwig.beam import spectral_l2_norm
from turbwig.beam import split_step_propagate
from turbwig.beam import white_noise_propagate
from turbwig.exceptions import GridMismatchError
from turbwig.exceptions import OutOfRangeError
from turbwig.exceptions import RegimeViolation
from turbwig.exceptions import StepSizeError
from turbwig.grid import SimGrid
from turbwig.medium import synthesize_screens
from turbwig.medium import synthesize_volume
from turbwig.spectra import SpectrumModel


def test_gaussian_beam_has_unit_norm(grid: SimGrid) -> None:
    """Test the normalization of the Gaussian beams"""
    for width, centre, momentum, chirp in [
        (1.0, 0.0, 0.0, 0.0),
        (0.7, 2.0, 1.0, 0.0),
        (1.5, -1.0, -2.0, 0.3),
    ]:
        beam = gaussian_beam(grid, width, centre, momentum, chirp)
        assert l2_norm(beam) == pytest.approx(1.0, abs=1e-10)
        assert spectral_l2_norm(beam) == pytest.approx(l2_norm(beam), rel=1e-12)


def test_unitarity_through_medium(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that the split-step propagator conserves the L2 norm"""
    beam = gaussian_beam(grid, width=1.0, momentum=0.5)
    realization = synthesize_volume(von_karman, grid, 10, seed=4)
    result = split_step_propagate(beam, realization, None, 1e-3, 1000)
    assert result.z == pytest.approx(1.0)
    assert abs(l2_norm(result) - l2_norm(beam)) < 1e-10


def test_unitarity_through_screens(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that the white-noise propagator conserves the L2 norm"""
    beam = gaussian_beam(grid, width=1.0)
    screens = synthesize_screens(von_karman, grid, 1000, 1e-3, seed=4)
    result = white_noise_propagate(beam, screens)
    assert abs(l2_norm(result) - l2_norm(beam)) < 1e-10


def test_free_propagation_matches_fresnel(grid: SimGrid) -> None:
    """Test the free split-step solution against the closed form"""
    beam = gaussian_beam(grid, width=1.0, centre=-1.0, momentum=1.0, chirp=0.2)
    result = split_step_propagate(beam, None, None, 1e-3, 500)
    expected = fresnel_gaussian(
        grid, 0.5, width=1.0, centre=-1.0, momentum=1.0, chirp=0.2
    )
    assert np.max(np.abs(result.values - expected.values)) < 1e-8


def test_graded_index_refocuses(grid: SimGrid) -> None:
    """Test that a graded-index background keeps the beam confined"""
    background = BackgroundModel(v0=GradedIndexProfile(omega=1.0))
    beam = gaussian_beam(grid, width=1.0, centre=2.0)
    result = split_step_propagate(beam, None, background, 1e-3, 1000)
    intensity = np.abs(result.values) ** 2
    centroid = float(np.sum(intensity * grid.axis()) / np.sum(intensity))
    # x(z) = 2 cos(z) for the centroid
    assert centroid == pytest.approx(2 * math.cos(1.0), abs=1e-3)


def test_splitting_is_second_order(grid: SimGrid) -> None:
    """Test that the step error against a quarter step shrinks like dz^2"""
    background = BackgroundModel(v0=GradedIndexProfile(omega=1.0))
    beam = gaussian_beam(grid, width=1.0, centre=2.0, momentum=0.5)
    z = 0.4
    steps = np.array([2e-3, 1e-3, 5e-4])
    errors = []
    for dz in steps:
        nsteps = round(z / dz)
        coarse = split_step_propagate(beam, None, background, dz, nsteps)
        fine = split_step_propagate(beam, None, background, dz / 4, 4 * nsteps)
        errors.append(np.linalg.norm(coarse.values - fine.values))
    order = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert 1.8 <= order <= 2.2


def test_step_size_limit(grid: SimGrid) -> None:
    """Test that too large a step is refused"""
    with pytest.raises(StepSizeError):
        SplitStepPropagator(grid, 0.01)
    SplitStepPropagator(grid, 0.01, diffraction=False)


def test_medium_range_is_checked(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that propagation beyond the synthesized medium raises"""
    beam = gaussian_beam(grid)
    realization = synthesize_volume(von_karman, grid, 4, seed=0)
    with pytest.raises(OutOfRangeError):
        split_step_propagate(beam, realization, None, 1e-3, 1000)


def test_grid_mismatch(grid: SimGrid, von_karman: SpectrumModel) -> None:
    """Test that a medium on another box is refused"""
    beam = gaussian_beam(grid)
    other = SimGrid(points=128, length=32.0)
    screens = synthesize_screens(von_karman, other, 4, 1e-3, seed=0)
    with pytest.raises(GridMismatchError):
        white_noise_propagate(beam, screens)


def test_plane_wave_mean_field_decay(
    grid: SimGrid, von_karman: SpectrumModel
) -> None:
    """Test E[Psi] = exp(-rate z) for a plane wave without diffraction"""
    dz, nsteps = 1.25e-3, 400
    plane = ComplexBeam(values=np.ones(grid.points, dtype=complex), grid=grid)
    total = np.zeros(grid.points, dtype=complex)
    realizations = 100
    for index in range(realizations):
        screens = synthesize_screens(von_karman, grid, nsteps, dz, seed=8, index=index)
        total += white_noise_propagate(plane, screens, diffraction=False).values
    mean = complex(np.mean(total / realizations))
    rate = mean_field_decay_rate(von_karman, grid, discrete=True)
    assert mean.real == pytest.approx(math.exp(-rate * dz * nsteps), abs=0.05)
    assert abs(mean.imag) < 0.05
    assert mean_field_decay_rate(von_karman, grid) == pytest.approx(rate, rel=0.2)


def test_require_confined(grid: SimGrid) -> None:
    """Test the confinement check near the wrap seam"""
    require_confined(gaussian_beam(grid))
    with pytest.raises(RegimeViolation):
        require_confined(gaussian_beam(grid, centre=15.0))
