"""Gaussian random media: resolved volumes, white-noise screens and transverse slices.

All fields are synthesized spectrally on the periodic box: real white noise is
transformed with ``rfftn``, weighted by ``sqrt(Φ ΔV)`` and transformed back, so
realness and Hermitian symmetry hold exactly.
"""
import math
from dataclasses import dataclass
from dataclasses import replace
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
import structlog
from scipy import fft

from .exceptions import DivergentIntegralError
from .exceptions import EstimatorError
from .exceptions import OutOfRangeError
from .grid import SimGrid
from .spectra import SpectrumModel
from .spectra import eval_spectrum
from .spectra import transverse_marginal
from .spectra import transverse_spectrum
from .spectra import transverse_structure_function
from .streams import Stream
from .streams import stream

logger = structlog.get_logger()


@dataclass(frozen=True)
class FieldRealization:
    values: np.ndarray
    dz_field: float
    seed: int
    model: SpectrumModel
    grid: SimGrid
    index: int = 0
    epsilon: float = 1.0

    @property
    def nz(self) -> int:
        return self.values.shape[0]

    @property
    def z_range(self) -> tuple[float, float]:
        """Range of z over which scaled reads are defined."""
        return 0.0, (self.nz - 1) * self.dz_field * self.epsilon**2

    def slice_at(self, z: float) -> np.ndarray:
        """V(z/ε², ·) with linear interpolation between stored slices."""
        position = z / self.epsilon**2 / self.dz_field
        last = self.nz - 1
        if position < -1e-12 or position > last + 1e-9:
            low, high = self.z_range
            raise OutOfRangeError(z, low, high)
        position = min(max(position, 0.0), float(last))
        lower = int(math.floor(position))
        weight = position - lower
        if weight == 0.0 or lower == last:
            return self.values[lower]
        return (1.0 - weight) * self.values[lower] + weight * self.values[lower + 1]

    def rescaled(self) -> "FieldRealization":
        """The equivalent unscaled field: values/ε on slices spaced dz_field·ε²."""
        return replace(
            self,
            values=self.values / self.epsilon,
            dz_field=self.dz_field * self.epsilon**2,
            epsilon=1.0,
        )

    def with_epsilon(self, epsilon: float) -> "FieldRealization":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class ScreenStack:
    screens: np.ndarray
    dz: float
    seed: int
    model: SpectrumModel
    grid: SimGrid
    index: int = 0

    @property
    def nsteps(self) -> int:
        return self.screens.shape[0]


def sample_scaled(
    realization: FieldRealization, z: float, x_index: Optional[Sequence[int]] = None
) -> Union[float, np.ndarray]:
    """Read V(z/ε², x); the whole transverse slice when ``x_index`` is None."""
    values = realization.slice_at(z)
    if x_index is None:
        return values
    return float(values[tuple(x_index)])


def _rfft_wavevectors(shape: tuple[int, ...], spacings: Sequence[float]) -> np.ndarray:
    axes = [
        2 * np.pi * np.fft.fftfreq(n, d=h)
        for n, h in zip(shape[:-1], spacings[:-1])
    ]
    axes.append(2 * np.pi * np.fft.rfftfreq(shape[-1], d=spacings[-1]))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _amplitudes(
    density: np.ndarray, cell: float, truncate_infrared: bool
) -> np.ndarray:
    density = np.array(density, dtype=float)
    origin = (0,) * density.ndim
    if not np.isfinite(density[origin]) and not truncate_infrared:
        raise DivergentIntegralError(
            "Φ at the zero mode", "infrared", "eta > 0 or truncate_infrared=True"
        )
    density[origin] = 0.0
    return np.sqrt(density * cell)


def _gaussian_field(
    rng: np.random.Generator,
    amplitudes: np.ndarray,
    shape: tuple[int, ...],
    leading: tuple[int, ...] = (),
) -> np.ndarray:
    noise = rng.standard_normal(leading + shape)
    axes = tuple(range(-len(shape), 0))
    coefficients = fft.rfftn(noise, axes=axes, norm="ortho") * amplitudes
    values = fft.irfftn(coefficients, s=shape, axes=axes, norm="ortho")
    return values * math.sqrt(math.prod(shape))


def _check_resolution(model: SpectrumModel, grid: SimGrid) -> None:
    if math.isfinite(model.rho) and grid.q_nyquist < model.rho:
        logger.warning(
            "Grid does not resolve the ultraviolet cutoff",
            q_nyquist=grid.q_nyquist,
            rho=model.rho,
        )


def synthesize_volume(
    model: SpectrumModel,
    grid: SimGrid,
    nz: int,
    seed: int,
    dz_field: Optional[float] = None,
    index: int = 0,
    truncate_infrared: bool = False,
) -> FieldRealization:
    """One Gaussian realization of V on ``nz`` slices times the transverse grid."""
    if nz < 1:
        raise ValueError("nz must be at least 1")
    model.check_dim(grid.dim)
    dz_field = grid.dx if dz_field is None else dz_field
    shape = (nz,) + grid.shape
    _check_resolution(model, grid)
    if model.amplitude == 0:
        values = np.zeros(shape)
    else:
        spacings = [dz_field] + [grid.dx] * grid.dim
        kvec = _rfft_wavevectors(shape, spacings)
        cell = math.prod(2 * math.pi / (n * h) for n, h in zip(shape, spacings))
        with np.errstate(divide="ignore"):
            density = eval_spectrum(model, kvec)
        amplitudes = _amplitudes(density, cell, truncate_infrared)
        rng = stream(seed, Stream.VOLUME, index)
        values = _gaussian_field(rng, amplitudes, shape)
    logger.debug("Synthesized volume", seed=seed, index=index, shape=shape)
    return FieldRealization(
        values=values,
        dz_field=dz_field,
        seed=seed,
        model=model,
        grid=grid,
        index=index,
        epsilon=grid.epsilon,
    )


def screen_amplitudes(
    model: SpectrumModel, grid: SimGrid, dz: float, truncate_infrared: bool = False
) -> np.ndarray:
    """sqrt(Φ_eff(q) Δq / dz) on the rfft layout of the transverse grid."""
    spectrum = transverse_spectrum(model)
    qvec = _rfft_wavevectors(grid.shape, [grid.dx] * grid.dim)
    with np.errstate(divide="ignore"):
        density = spectrum(qvec) / dz
    return _amplitudes(density, grid.dq**grid.dim, truncate_infrared)


def synthesize_screens(
    model: SpectrumModel,
    grid: SimGrid,
    nsteps: int,
    dz: float,
    seed: int,
    index: int = 0,
    truncate_infrared: bool = False,
) -> ScreenStack:
    """Independent screens with transverse density Φ_eff/dz, one per z-step."""
    model.check_dim(grid.dim)
    _check_resolution(model, grid)
    if model.amplitude == 0:
        screens = np.zeros((nsteps,) + grid.shape)
    else:
        amplitudes = screen_amplitudes(model, grid, dz, truncate_infrared)
        rng = stream(seed, Stream.SCREENS, index)
        screens = _gaussian_field(rng, amplitudes, grid.shape, leading=(nsteps,))
    return ScreenStack(
        screens=screens, dz=dz, seed=seed, model=model, grid=grid, index=index
    )


def slice_density(model: SpectrumModel, grid: SimGrid) -> np.ndarray:
    """Φ⊥ on the full (unshifted) transverse wavevector grid."""
    k = np.sqrt(grid.q_squared())
    with np.errstate(divide="ignore"):
        return transverse_marginal(model, k)


def synthesize_slices(
    model: SpectrumModel,
    grid: SimGrid,
    count: int,
    seed: int,
    truncate_infrared: bool = False,
) -> np.ndarray:
    """``count`` independent transverse slices V(0, ·) stacked on a leading axis."""
    model.check_dim(grid.dim)
    if model.amplitude == 0:
        return np.zeros((count,) + grid.shape)
    qvec = _rfft_wavevectors(grid.shape, [grid.dx] * grid.dim)
    with np.errstate(divide="ignore"):
        density = transverse_marginal(model, np.linalg.norm(qvec, axis=-1))
    amplitudes = _amplitudes(density, grid.dq**grid.dim, truncate_infrared)
    rng = stream(seed, Stream.SLICES)
    return _gaussian_field(rng, amplitudes, grid.shape, leading=(count,))


def grid_covariance(
    model: SpectrumModel, grid: SimGrid, lags: Sequence[int]
) -> np.ndarray:
    """Exact covariance of synthesized slices at integer lags along the first axis."""
    density = slice_density(model, grid)
    density.flat[0] = 0.0
    weights = density * grid.dq**grid.dim
    q = grid.wavevectors()[..., 0]
    return np.array([np.sum(weights * np.cos(q * lag * grid.dx)) for lag in lags])


@dataclass(frozen=True)
class CovarianceEstimate:
    lags: np.ndarray
    separations: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    samples: int


def _samples_of(
    data: Union[FieldRealization, Sequence[FieldRealization], np.ndarray]
) -> list[np.ndarray]:
    if isinstance(data, FieldRealization):
        return [values for values in data.values]
    if isinstance(data, np.ndarray):
        return [values for values in data]
    return [realization.values for realization in data]


def _jackknife(per_sample: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and jackknife standard error along the first axis."""
    n = per_sample.shape[0]
    total = per_sample.sum(axis=0)
    mean = total / n
    leave_one_out = (total - per_sample) / (n - 1)
    spread = np.sum((leave_one_out - leave_one_out.mean(axis=0)) ** 2, axis=0)
    return mean, np.sqrt((n - 1) / n * spread)


def empirical_covariance(
    data: Union[FieldRealization, Sequence[FieldRealization], np.ndarray],
    lags: Sequence[int],
    axis: int = -1,
    dx: Optional[float] = None,
) -> CovarianceEstimate:
    """Zero-mean periodic lag covariance along a transverse axis.

    Samples are the realizations of a sequence, or the slices of a single
    realization or array; errors are leave-one-out jackknife estimates.
    """
    samples = _samples_of(data)
    if len(samples) < 2:
        raise EstimatorError("the jackknife needs at least two samples")
    lags = np.asarray(lags, dtype=int)
    size = samples[0].shape[axis]
    if np.any(np.abs(lags) > size // 2):
        raise EstimatorError(
            f"lags must not exceed half the box ({size // 2} cells), "
            f"got {lags.tolist()}"
        )
    if dx is None and isinstance(data, FieldRealization):
        dx = data.grid.dx
    per_sample = np.array(
        [
            [
                np.mean(values * np.roll(values, -abs(int(lag)), axis=axis))
                for lag in lags
            ]
            for values in samples
        ]
    )
    mean, error = _jackknife(per_sample)
    return CovarianceEstimate(
        lags=lags,
        separations=lags * (dx or 1.0),
        values=mean,
        standard_errors=error,
        samples=len(samples),
    )


# Increment-variance scaling diagnostics ----------------------------------


def increment_bound(model: SpectrumModel, gamma: float) -> float:
    """γ² min(γ⁻¹, ρ)^(2-2H)."""
    return gamma**2 * min(1 / gamma, model.rho) ** (2 - 2 * model.H)


@dataclass(frozen=True)
class IncrementVarianceReport:
    gamma: float
    y: np.ndarray
    separation: float
    quadrature: float
    grid_sum: float
    monte_carlo: float
    standard_error: float
    bound: float
    in_regime: bool

    @property
    def ratio_to_bound(self) -> float:
        return self.quadrature / self.bound

    @property
    def z_score(self) -> float:
        if self.standard_error == 0:
            return 0.0
        return (self.monte_carlo - self.grid_sum) / self.standard_error


def increment_grid(
    model: SpectrumModel, separation: float, points: int = 512
) -> SimGrid:
    """Transverse grid with the separation spanning two cells."""
    return SimGrid(dim=model.dim, points=points, length=points * separation / 2)


def increment_variance_check(
    model: SpectrumModel,
    gamma: float,
    y: Sequence[float],
    samples: int = 200,
    seed: int = 0,
    points: int = 512,
) -> IncrementVarianceReport:
    """E[(V(x+γy/2) - V(x-γy/2))²] by quadrature, grid mode sum and Monte Carlo.

    The Monte Carlo path samples along the first transverse axis with the
    same separation γ|y|; the built-in spectra are isotropic.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    separation = gamma * float(np.linalg.norm(y))
    in_regime = gamma <= 1 and model.eta <= 1 <= model.rho
    if not in_regime:
        logger.warning(
            "Increment variance outside the gamma, eta <= 1 <= rho regime",
            gamma=gamma,
            eta=model.eta,
            rho=model.rho,
        )
    bound = increment_bound(model, gamma)
    if separation == 0 or model.amplitude == 0:
        return IncrementVarianceReport(
            gamma, y, separation, 0.0, 0.0, 0.0, 0.0, bound, in_regime
        )
    quadrature = transverse_structure_function(model, separation)
    grid = increment_grid(model, separation, points)
    density = slice_density(model, grid)
    density.flat[0] = 0.0
    q = grid.wavevectors()[..., 0]
    grid_sum = float(
        np.sum(density * grid.dq**grid.dim * 2 * (1 - np.cos(q * separation)))
    )
    monte_carlo, error = 0.0, 0.0
    if samples >= 2:
        slices = synthesize_slices(
            model, grid, samples, seed, truncate_infrared=model.eta == 0
        )
        increments = np.roll(slices, -2, axis=1) - slices
        per_sample = np.mean(
            increments**2, axis=tuple(range(1, increments.ndim))
        )
        monte_carlo = float(per_sample.mean())
        error = float(per_sample.std(ddof=1) / math.sqrt(samples))
    logger.debug(
        "Increment variance",
        gamma=gamma,
        separation=separation,
        quadrature=quadrature,
        grid_sum=grid_sum,
    )
    return IncrementVarianceReport(
        gamma=gamma,
        y=y,
        separation=separation,
        quadrature=quadrature,
        grid_sum=grid_sum,
        monte_carlo=monte_carlo,
        standard_error=error,
        bound=bound,
        in_regime=in_regime,
    )


@dataclass(frozen=True)
class ScalingFit:
    parameter: str
    values: np.ndarray
    observable: np.ndarray
    slope: float
    expected: float


def _fit(
    parameter: str,
    values: Sequence[float],
    observable: Sequence[float],
    expected: float,
) -> ScalingFit:
    values = np.asarray(values, dtype=float)
    observable = np.asarray(observable, dtype=float)
    slope = float(np.polyfit(np.log(values), np.log(observable), 1)[0])
    return ScalingFit(parameter, values, observable, slope, expected)


def increment_rho_sweep(
    model: SpectrumModel, gamma: float, rhos: Sequence[float], y_norm: float = 1.0
) -> ScalingFit:
    """Slope of E[(δ_γV)²]/γ² against ρ at fixed γ|y|, expected 2 - 2H."""
    observable = [
        transverse_structure_function(model.copy(update={"rho": rho}), gamma * y_norm)
        / gamma**2
        for rho in rhos
    ]
    return _fit("rho", rhos, observable, 2 - 2 * model.H)


def increment_gamma_sweep(
    model: SpectrumModel, gammas: Sequence[float], y_norm: float = 1.0
) -> ScalingFit:
    """Slope of E[(δ_γV)²] against γ at fixed ρ, expected 2H when γρ ≥ 1."""
    observable = [transverse_structure_function(model, g * y_norm) for g in gammas]
    return _fit("gamma", gammas, observable, 2 * model.H)
