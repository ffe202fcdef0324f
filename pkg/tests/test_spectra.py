# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate

from turbwig.exceptions import DimensionError
from turbwig.exceptions import DivergentIntegralError
from turbwig.exceptions import RegimeViolation
from turbwig.spectra import DiffusionTable
from turbwig.spectra import SpectrumForm
from turbwig.spectra import SpectrumModel
from turbwig.spectra import covariance_function
from turbwig.spectra import diffusion_origin
from turbwig.spectra import diffusion_tensor
from turbwig.spectra import eval_spectrum
from turbwig.spectra import structure_function
from turbwig.spectra import total_variance
from turbwig.spectra import transverse_marginal
from turbwig.spectra import transverse_spectrum


def lorentzian_density(xi: np.ndarray, k: np.ndarray) -> np.ndarray:
    """(1 + ξ² + |k|²)^(-4/3), the von Karman shape for H = 1/3, d = 1."""
    return (1 + np.asarray(xi) ** 2 + np.sum(np.asarray(k) ** 2, axis=-1)) ** (-4 / 3)


@pytest.mark.parametrize("r", [0.25, 1.0, 3.0])
def test_matern_half_is_exponential(r: float) -> None:
    """Test that H = 1/2 and eta = 1 gives the covariance exp(-r)"""
    model = SpectrumModel(H=0.5, eta=1.0)
    value = covariance_function(model, [r, 0.0])
    assert value == pytest.approx(math.exp(-r), abs=1e-8)


def test_power_law_slope() -> None:
    """Test the inertial-range slope -(2H + d + 1) of the density"""
    model = SpectrumModel(H=1 / 3, eta=1e-3, dim=2)
    low, high = eval_spectrum(model, [[0.0, 10.0, 0.0], [0.0, 100.0, 0.0]])
    slope = math.log(high / low) / math.log(10.0)
    assert slope == pytest.approx(-11 / 3, abs=1e-3)


def test_von_karman_variance_equals_amplitude() -> None:
    """Test the variance of the bounded power law with the von Karman prefactor"""
    von_karman = SpectrumModel(H=1 / 3, eta=1.0, amplitude=2.0)
    bounded = SpectrumModel(
        form=SpectrumForm.POWER_LAW_BOUNDED,
        H=1 / 3,
        eta=1.0,
        amplitude=von_karman.prefactor,
    )
    assert total_variance(von_karman) == 2.0
    assert total_variance(bounded) == pytest.approx(2.0, rel=1e-5)


def test_inner_scale_reduces_variance() -> None:
    """Test that a finite rho removes variance"""
    model = SpectrumModel(H=1 / 3, eta=1.0, rho=4.0)
    assert 0 < total_variance(model) < 1.0


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_quadrature_matches_bessel(r: float) -> None:
    """Test that the radial quadrature reproduces the closed Bessel form"""
    model = SpectrumModel(H=1 / 3, eta=1.0)
    bessel = covariance_function(model, [0.0, r], method="bessel")
    quadrature = covariance_function(model, [0.0, r], method="quadrature")
    assert quadrature == pytest.approx(bessel, rel=1e-4)


def test_bessel_needs_closed_form() -> None:
    """Test that the Bessel path refuses a finite inner scale"""
    model = SpectrumModel(H=1 / 3, eta=1.0, rho=4.0)
    with pytest.raises(RegimeViolation):
        covariance_function(model, [0.0, 1.0], method="bessel")


def test_structure_function_is_twice_the_covariance_drop() -> None:
    """Test D(r) = 2(B(0) - B(r))"""
    model = SpectrumModel(H=1 / 3, eta=1.0)
    expected = 2 * (model.amplitude - covariance_function(model, [0.0, 0.7]))
    assert structure_function(model, 0.7) == pytest.approx(expected, rel=1e-4)
    assert structure_function(model, 0.0) == 0.0


@pytest.mark.parametrize("k", [0.0, 0.5, 3.0])
def test_transverse_marginal_matches_quad(k: float) -> None:
    """Test the closed-form marginal against direct integration over xi"""
    model = SpectrumModel(H=1 / 3, eta=1.0, rho=4.0)

    def integrand(xi: float) -> float:
        return float(eval_spectrum(model, [xi, k]))

    expected = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-10)[0]
    assert float(transverse_marginal(model, k)) == pytest.approx(expected, rel=1e-6)


def test_custom_density_matches_builtin() -> None:
    """Test that a custom density equal to von Karman gives the same marginal"""
    reference = SpectrumModel(H=1 / 3, eta=1.0)
    custom = SpectrumModel(
        form=SpectrumForm.CUSTOM,
        H=1 / 3,
        eta=1.0,
        amplitude=reference.prefactor,
        density=lorentzian_density,
        bound_constant=1.0,
    )
    for k in (0.0, 1.0, 2.5):
        assert float(transverse_marginal(custom, k)) == pytest.approx(
            float(transverse_marginal(reference, k)), rel=1e-6
        )
    effective = transverse_spectrum(custom)
    assert float(effective.radial(1.5)) == pytest.approx(
        float(transverse_spectrum(reference).radial(1.5)), rel=1e-12
    )


def test_validation() -> None:
    """Test the model validators"""
    with pytest.raises(ValidationError):
        SpectrumModel(H=1 / 3, eta=0.0)
    with pytest.raises(ValidationError):
        SpectrumModel(form=SpectrumForm.CUSTOM, H=1 / 3, eta=1.0)
    with pytest.raises(ValidationError):
        SpectrumModel(H=1.2, eta=1.0)
    SpectrumModel(form=SpectrumForm.POWER_LAW_BOUNDED, H=1 / 3, eta=0.0)


def test_eval_spectrum_checks_dimension() -> None:
    """Test that wavevectors of the wrong length are refused"""
    model = SpectrumModel(H=1 / 3, eta=1.0)
    with pytest.raises(DimensionError):
        eval_spectrum(model, [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        eval_spectrum(model, [np.nan, 1.0])


def test_divergence_power_counting() -> None:
    """Test the infrared and ultraviolet divergence classification"""
    bounded = SpectrumModel(
        form=SpectrumForm.POWER_LAW_BOUNDED, H=0.25, eta=0.0, rho=10.0
    )
    assert transverse_spectrum(bounded).divergence(2) is None
    assert math.isfinite(transverse_spectrum(bounded).moment(2))

    infrared = SpectrumModel(form=SpectrumForm.POWER_LAW_BOUNDED, H=0.75, eta=0.0)
    error = transverse_spectrum(infrared).divergence(2)
    assert isinstance(error, DivergentIntegralError)
    assert error.end == "infrared"
    with pytest.raises(DivergentIntegralError):
        transverse_spectrum(infrared).moment(2)
    with pytest.raises(RegimeViolation):
        diffusion_origin(infrared)

    ultraviolet = SpectrumModel(H=1 / 3, eta=1.0)
    error = transverse_spectrum(ultraviolet).divergence(2)
    assert isinstance(error, DivergentIntegralError)
    assert error.end == "ultraviolet"
    with pytest.raises(DivergentIntegralError):
        total_variance(infrared)


def test_diffusion_table(smooth_spectrum: SpectrumModel) -> None:
    """Test the spline table against the origin and direct quadrature"""
    table = DiffusionTable(smooth_spectrum)
    origin = diffusion_origin(smooth_spectrum)
    assert table(np.zeros((1, 1)))[0] == pytest.approx(origin, rel=1e-5)
    for x in (0.3, 0.7):
        direct = diffusion_tensor(smooth_spectrum, [x]).value
        assert table(np.array([[x]]))[0] == pytest.approx(direct, rel=1e-3, abs=1e-8)
        assert table(np.array([[-x]]))[0] == pytest.approx(direct, rel=1e-3, abs=1e-8)
    far = table(np.array([[10 * table.radius]]))
    assert np.all(far == 0)


def test_diffusion_tensor_isotropic_in_two_dimensions() -> None:
    """Test that D(0) is a multiple of the identity in d = 2"""
    model = SpectrumModel(H=1 / 3, eta=1.0, rho=4.0, dim=2)
    origin = diffusion_origin(model)
    assert origin[0, 1] == 0.0
    assert origin[0, 0] == pytest.approx(origin[1, 1])
    tensor = diffusion_tensor(model, [0.5, 0.0])
    assert tensor.value[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert tensor.spectral_norm <= tensor.trace_at_origin
