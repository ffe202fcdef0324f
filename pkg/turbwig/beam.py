"""Propagation of the complex modulation Ψ.

The scaled parabolic equation reads ``∂_zΨ = (iγ/(2k̃))ΔΨ + (ik̃/γ) V_tot Ψ`` with
``V_tot = V₀ + (μ/ε) V(z/ε², x)``; both substeps are unitary on the periodic
grid.
"""
import math
from dataclasses import dataclass
from dataclasses import replace
from typing import Optional
from typing import Sequence

import numpy as np
import structlog
from scipy import fft

from .background import BackgroundModel
from .exceptions import NonFiniteError
from .exceptions import RegimeViolation
from .exceptions import StepSizeError
from .grid import SimGrid
from .medium import FieldRealization
from .medium import ScreenStack
from .spectra import SpectrumModel
from .spectra import transverse_spectrum

logger = structlog.get_logger()

PHASE_LIMIT = math.pi / 4
FINITE_CHECK_INTERVAL = 64


@dataclass(frozen=True)
class ComplexBeam:
    values: np.ndarray
    grid: SimGrid
    z: float = 0.0

    @property
    def gamma(self) -> float:
        return self.grid.gamma

    @property
    def ktilde(self) -> float:
        return self.grid.ktilde

    def scaled(self, factor: complex) -> "ComplexBeam":
        return replace(self, values=self.values * factor)


def l2_norm(beam: ComplexBeam) -> float:
    """Discrete L² norm with the cell-volume weight."""
    return float(math.sqrt(np.sum(np.abs(beam.values) ** 2) * beam.grid.cell_volume))


def spectral_l2_norm(beam: ComplexBeam) -> float:
    coefficients = fft.fftn(beam.values)
    total = np.sum(np.abs(coefficients) ** 2) / beam.values.size
    return float(math.sqrt(total * beam.grid.cell_volume))


def _gaussian_envelope(
    grid: SimGrid,
    x: np.ndarray,
    z: float,
    width: float,
    centre: Sequence[float],
    momentum: Sequence[float],
    chirp: float,
) -> np.ndarray:
    beta = grid.gamma / (2 * grid.ktilde)
    alpha = 1 / (2 * width**2) - 1j * chirp / grid.gamma
    k = np.asarray(momentum, dtype=float) / grid.gamma
    spread = 1 + 4j * beta * alpha * z
    shifted = x - np.asarray(centre, dtype=float) - 2 * beta * k * z
    norm = (math.pi * width**2) ** (-grid.dim / 4)
    return (
        norm
        * spread ** (-grid.dim / 2)
        * np.exp(-alpha * np.sum(shifted**2, axis=-1) / spread)
        * np.exp(1j * (x @ k) - 1j * beta * float(k @ k) * z)
    )


def _as_vector(value: float | Sequence[float], dim: int) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * dim
    vector = [float(v) for v in value]
    if len(vector) != dim:
        raise ValueError(f"expected {dim} components, got {len(vector)}")
    return vector


def gaussian_beam(
    grid: SimGrid,
    width: float = 1.0,
    centre: float | Sequence[float] = 0.0,
    momentum: float | Sequence[float] = 0.0,
    chirp: float = 0.0,
    z: float = 0.0,
) -> ComplexBeam:
    """Unit-norm Gaussian with tilt ``exp(i p₀·x/γ)`` and chirp ``exp(i a|x-c|²/γ)``."""
    return fresnel_gaussian(grid, 0.0, width, centre, momentum, chirp, z=z)


def fresnel_gaussian(
    grid: SimGrid,
    distance: float,
    width: float = 1.0,
    centre: float | Sequence[float] = 0.0,
    momentum: float | Sequence[float] = 0.0,
    chirp: float = 0.0,
    z: float = 0.0,
) -> ComplexBeam:
    """Closed-form free-space evolution of :func:`gaussian_beam` over ``distance``."""
    x = grid.coordinates()
    values = _gaussian_envelope(
        grid,
        x,
        distance,
        width,
        _as_vector(centre, grid.dim),
        _as_vector(momentum, grid.dim),
        chirp,
    )
    return ComplexBeam(values=values, grid=grid, z=z + distance)


def confinement_margin(beam: ComplexBeam) -> float:
    """Distance from the wrap seam to the intensity centroid, in standard widths."""
    grid = beam.grid
    intensity = np.abs(beam.values) ** 2
    total = intensity.sum()
    if total == 0:
        return math.inf
    x = grid.coordinates()
    half = grid.length / 2
    margins = []
    for axis in range(grid.dim):
        coordinate = x[..., axis]
        mean = float(np.sum(intensity * coordinate) / total)
        spread = math.sqrt(float(np.sum(intensity * (coordinate - mean) ** 2) / total))
        if spread == 0:
            continue
        margins.append((half - abs(mean)) / spread)
    return min(margins, default=math.inf)


def require_confined(beam: ComplexBeam, widths: float = 4.0) -> None:
    margin = confinement_margin(beam)
    if margin < widths:
        raise RegimeViolation(
            f"beam at least {widths:g} standard widths from the box edge",
            f"margin is {margin:.3g}",
        )


class SplitStepPropagator:
    """Strang splitting ``K(dz/2) P(dz) K(dz/2)`` on a fixed grid and step.

    Consecutive half kinetic steps are fused, so ``nsteps`` steps cost
    ``nsteps + 1`` Fourier multiplier applications.
    """

    def __init__(self, grid: SimGrid, dz: float, diffraction: bool = True) -> None:
        self.grid = grid
        self.dz = dz
        self.diffraction = diffraction
        limit = grid.gamma * grid.dim * grid.q_nyquist**2 * dz / (2 * grid.ktilde)
        if diffraction and limit >= PHASE_LIMIT:
            raise StepSizeError(
                "diffraction phase γ|q|²dz/(2k̃) at Nyquist", limit, PHASE_LIMIT
            )
        if diffraction:
            phase = grid.gamma * grid.q_squared() * dz / (4 * grid.ktilde)
            self._half = np.exp(-1j * phase)
            self._full = self._half**2
        else:
            self._half = self._full = None
        self.coupling = grid.ktilde / grid.gamma

    def kinetic(self, values: np.ndarray, full: bool = False) -> np.ndarray:
        multiplier = self._full if full else self._half
        if multiplier is None:
            return values
        return fft.ifftn(multiplier * fft.fftn(values))

    def potential_phase(self, values: np.ndarray, potential: np.ndarray) -> np.ndarray:
        return values * np.exp(1j * self.coupling * potential * self.dz)

    def check_potential(self, potential: np.ndarray) -> None:
        phase = self.coupling * float(np.max(np.abs(potential))) * self.dz
        if phase >= PHASE_LIMIT:
            raise StepSizeError("potential phase k̃|V|dz/γ", phase, PHASE_LIMIT)

    def run(
        self, beam: ComplexBeam, potentials: "PotentialSource", nsteps: int
    ) -> ComplexBeam:
        values = self.kinetic(np.asarray(beam.values, dtype=complex))
        z = beam.z
        for step in range(nsteps):
            potential = potentials(step, beam.z + (step + 0.5) * self.dz)
            values = self.potential_phase(values, potential)
            values = self.kinetic(values, full=step < nsteps - 1)
            z = beam.z + (step + 1) * self.dz
            if (step + 1) % FINITE_CHECK_INTERVAL == 0 or step == nsteps - 1:
                if not np.all(np.isfinite(values)):
                    raise NonFiniteError(step, z)
        if nsteps == 0:
            values = np.asarray(beam.values, dtype=complex)
        return ComplexBeam(values=values, grid=beam.grid, z=z)


class PotentialSource:
    """Total potential on the grid at step ``m`` and midpoint ``z``."""

    def __call__(self, step: int, z: float) -> np.ndarray:
        raise NotImplementedError


class MediumPotential(PotentialSource):
    def __init__(
        self,
        grid: SimGrid,
        realization: Optional[FieldRealization],
        background: BackgroundModel,
    ) -> None:
        self.x = grid.coordinates()
        self.realization = realization
        self.background = background
        self.shape = grid.shape

    def __call__(self, step: int, z: float) -> np.ndarray:
        v0 = self.background.v0.value(z, self.x)
        if self.realization is None:
            return np.broadcast_to(v0, self.shape)
        fluctuation = self.realization.slice_at(z)
        epsilon = self.realization.epsilon
        return self.background.potential(z, self.x, fluctuation, epsilon)


class ScreenPotential(PotentialSource):
    def __init__(
        self, grid: SimGrid, screens: ScreenStack, background: BackgroundModel
    ) -> None:
        self.x = grid.coordinates()
        self.screens = screens
        self.background = background

    def __call__(self, step: int, z: float) -> np.ndarray:
        mu = self.background.mu.value(z, self.x)
        return self.background.v0.value(z, self.x) + mu * self.screens.screens[step]


def split_step_propagate(
    beam: ComplexBeam,
    realization: Optional[FieldRealization],
    background: Optional[BackgroundModel],
    dz: float,
    nsteps: int,
    diffraction: bool = True,
) -> ComplexBeam:
    """Propagate through a resolved medium; ``realization=None`` means V ≡ 0."""
    background = background or BackgroundModel()
    grid = beam.grid
    if realization is not None:
        grid.require_same_box(realization.grid, "the realization")
        if nsteps > 0:
            realization.slice_at(beam.z + 0.5 * dz)
            realization.slice_at(beam.z + (nsteps - 0.5) * dz)
    propagator = SplitStepPropagator(grid, dz, diffraction=diffraction)
    source = MediumPotential(grid, realization, background)
    envelope = _potential_envelope(grid, realization, background, beam.z)
    propagator.check_potential(envelope)
    logger.debug("Split-step propagation", nsteps=nsteps, dz=dz, z=beam.z)
    return propagator.run(beam, source, nsteps)


def _potential_envelope(
    grid: SimGrid,
    realization: Optional[FieldRealization],
    background: BackgroundModel,
    z: float,
) -> np.ndarray:
    x = grid.coordinates()
    v0 = np.abs(background.v0.value(z, x))
    if realization is None:
        return v0
    mu_max = float(np.max(np.abs(background.mu.value(z, x))))
    v_max = float(np.max(np.abs(realization.values)))
    return v0 + mu_max * v_max / realization.epsilon


def white_noise_propagate(
    beam: ComplexBeam,
    screens: ScreenStack,
    background: Optional[BackgroundModel] = None,
    diffraction: bool = True,
) -> ComplexBeam:
    """Itô limit model: the m-th step applies the phase ``exp(i(k̃/γ)μ S_m dz)``."""
    background = background or BackgroundModel()
    beam.grid.require_same_box(screens.grid, "the screen stack")
    propagator = SplitStepPropagator(beam.grid, screens.dz, diffraction=diffraction)
    source = ScreenPotential(beam.grid, screens, background)
    return propagator.run(beam, source, screens.nsteps)


def mean_field_decay_rate(
    model: SpectrumModel, grid: SimGrid, discrete: bool = False
) -> float:
    """Decay rate (k̃²/(2γ²)) C_eff(0) of E[Ψ] under the white-noise phase.

    With ``discrete=True`` C_eff(0) is the variance actually carried by the
    grid's screens (zero mode excluded), which makes the plane-wave law exact
    for screen ensembles.
    """
    if model.amplitude == 0:
        return 0.0
    if discrete:
        variance = screen_variance(model, grid)
    else:
        variance = transverse_spectrum(model).covariance(np.zeros(grid.dim))
    return grid.ktilde**2 / (2 * grid.gamma**2) * variance


def screen_variance(model: SpectrumModel, grid: SimGrid, dz: float = 1.0) -> float:
    """Pointwise variance of a screen, Σ Φ_eff(q) Δq / dz over the grid."""
    spectrum = transverse_spectrum(model)
    with np.errstate(divide="ignore"):
        density = spectrum(grid.wavevectors())
    density.flat[0] = 0.0
    return float(np.sum(density) * grid.dq**grid.dim / dz)
