"""Discrete Wigner distributions on the (x, p) phase-space grid, d = 1.

``W(x, p) = (2π)^{-1} ∫ exp(-ipy) Ψ(x + γy/2) Ψ*(x - γy/2) dy`` is sampled at
lags ``y_m = 2m·dx/γ`` so that both shifted arguments land on grid points.
The beam is embedded in a zero-padded box of twice its size, which makes the
mass marginal exact and keeps periodic images out of the lag sum.
"""
import math
from dataclasses import dataclass
from dataclasses import replace
from typing import Callable
from typing import Optional
from typing import Sequence

import numpy as np
import structlog
from pydantic import BaseModel
from pydantic import Field
from pydantic import PositiveFloat
from pydantic import PositiveInt
from scipy import fft

from .beam import ComplexBeam
from .beam import gaussian_beam
from .exceptions import DimensionError
from .exceptions import GridAlignmentError
from .grid import SimGrid
from .streams import Stream
from .streams import stream

logger = structlog.get_logger()

BAND_RESIDUE_TOLERANCE = 1e-8


class PhaseSpaceGrid(BaseModel):
    class Config:
        frozen = True

    points: PositiveInt = Field(
        ..., description="Points along x, equal to points along p"
    )
    dx: PositiveFloat
    dp: PositiveFloat
    gamma: PositiveFloat

    @classmethod
    def for_grid(cls, grid: SimGrid, gamma: Optional[float] = None) -> "PhaseSpaceGrid":
        gamma = grid.gamma if gamma is None else gamma
        return cls(
            points=grid.points,
            dx=grid.dx,
            dp=math.pi * gamma / (grid.points * grid.dx),
            gamma=gamma,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.points, self.points

    @property
    def cell_area(self) -> float:
        return self.dx * self.dp

    @property
    def admissible_gamma(self) -> float:
        """The γ for which dp·N·dx = πγ."""
        return self.dp * self.points * self.dx / math.pi

    def is_aligned(self, gamma: float) -> bool:
        return math.isclose(self.admissible_gamma, gamma, rel_tol=1e-12)

    def x_axis(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.dx

    def p_axis(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.dp

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_axis(), self.p_axis(), indexing="ij")

    def xi_axis(self) -> np.ndarray:
        """Wavenumbers conjugate to x, in fftshift order."""
        return 2 * np.pi * fft.fftshift(fft.fftfreq(self.points, d=self.dx))

    def y_axis(self) -> np.ndarray:
        """Variables conjugate to p, in fftshift order."""
        return 2 * np.pi * fft.fftshift(fft.fftfreq(self.points, d=self.dp))

    def same_as(self, other: "PhaseSpaceGrid") -> bool:
        return (
            self.points == other.points
            and math.isclose(self.dx, other.dx, rel_tol=1e-12)
            and math.isclose(self.dp, other.dp, rel_tol=1e-12)
        )


@dataclass(frozen=True)
class WignerGrid:
    values: np.ndarray
    phase: PhaseSpaceGrid
    z: float = 0.0
    imaginary_residue: float = 0.0
    band_residue: float = 0.0

    @property
    def gamma(self) -> float:
        return self.phase.gamma

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.phase.cell_area)

    def l2_norm(self) -> float:
        return float(math.sqrt(np.sum(self.values**2) * self.phase.cell_area))

    def with_values(
        self, values: np.ndarray, z: Optional[float] = None
    ) -> "WignerGrid":
        return replace(self, values=values, z=self.z if z is None else z)


def _require_1d(grid: SimGrid, operation: str) -> None:
    if grid.dim != 1:
        raise DimensionError(operation, grid.dim, [1])


def band_residue(beam: ComplexBeam) -> float:
    """Fraction of spectral energy at |q| ≥ π/(2dx)."""
    coefficients = np.abs(fft.fft(beam.values)) ** 2
    total = coefficients.sum()
    if total == 0:
        return 0.0
    q = np.abs(beam.grid.wavenumbers())
    return float(coefficients[q >= math.pi / (2 * beam.grid.dx)].sum() / total)


def wigner_transform(
    beam: ComplexBeam,
    gamma: Optional[float] = None,
    target: Optional[PhaseSpaceGrid] = None,
) -> WignerGrid:
    grid = beam.grid
    _require_1d(grid, "wigner_transform")
    gamma = grid.gamma if gamma is None else gamma
    phase = PhaseSpaceGrid.for_grid(grid, gamma)
    if target is not None:
        same_dx = math.isclose(target.dx, grid.dx, rel_tol=1e-12)
        if target.points != grid.points or not same_dx:
            raise GridAlignmentError(gamma, [])
        if not target.is_aligned(gamma):
            raise GridAlignmentError(gamma, [target.admissible_gamma])
        phase = target
    n = grid.points
    half = n // 2
    padded = np.zeros(2 * n, dtype=complex)
    padded[half : half + n] = beam.values
    centre = np.arange(n)[:, None] + half
    lags = np.arange(-half, n - half)[None, :]
    products = padded[centre + lags] * np.conj(padded[centre - lags])
    dy = 2 * grid.dx / gamma
    spectrum = fft.fftshift(fft.fft(fft.ifftshift(products, axes=1), axis=1), axes=1)
    transform = spectrum * dy / (2 * math.pi)
    scale = float(np.max(np.abs(transform.real))) or 1.0
    imaginary = float(np.max(np.abs(transform.imag))) / scale
    residue = band_residue(beam)
    if residue > BAND_RESIDUE_TOLERANCE:
        logger.warning("Beam is not band-limited for the Wigner grid", residue=residue)
    result = WignerGrid(
        values=transform.real.copy(),
        phase=phase,
        z=beam.z,
        imaginary_residue=imaginary,
        band_residue=residue,
    )
    check_sup_norm(result, float(np.sum(np.abs(beam.values) ** 2) * grid.dx))
    return result


def sup_norm_bound(norm_squared: float, gamma: float) -> float:
    """|W| ≤ ‖Ψ‖²/(πγ) for d = 1."""
    return norm_squared / (math.pi * gamma)


def check_sup_norm(wigner: WignerGrid, norm_squared: float) -> float:
    bound = sup_norm_bound(norm_squared, wigner.gamma)
    peak = float(np.max(np.abs(wigner.values)))
    if bound > 0 and peak > bound * (1 + 1e-8):
        logger.warning("Wigner sup-norm bound exceeded", peak=peak, bound=bound)
    return peak


@dataclass(frozen=True)
class Marginals:
    mass: np.ndarray
    flux: np.ndarray
    second_moment: np.ndarray


def marginals_and_flux(wigner: WignerGrid) -> Marginals:
    """∫W dp, ∫pW dp and ∫p²W dp on the x-grid."""
    p = wigner.phase.p_axis()
    dp = wigner.phase.dp
    values = wigner.values
    return Marginals(
        mass=values.sum(axis=1) * dp,
        flux=values @ p * dp,
        second_moment=values @ p**2 * dp,
    )


def mixed_state_wigner(
    beams: Sequence[ComplexBeam],
    weights: Sequence[float],
    gamma: Optional[float] = None,
) -> WignerGrid:
    """Weighted average of pure-state transforms."""
    weights = np.asarray(weights, dtype=float)
    if len(beams) == 0 or len(beams) != len(weights):
        raise ValueError("need one weight per beam")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if not math.isclose(float(weights.sum()), 1.0, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"weights must sum to 1, got {weights.sum():.15g}")
    transforms = [wigner_transform(beam, gamma) for beam in beams]
    values = np.sum([w * t.values for w, t in zip(weights, transforms)], axis=0)
    first = transforms[0]
    return replace(
        first,
        values=values,
        imaginary_residue=max(t.imaginary_residue for t in transforms),
        band_residue=max(t.band_residue for t in transforms),
    )


def wkb_ensemble(
    grid: SimGrid,
    amplitude: Callable[[np.ndarray], np.ndarray],
    phase_gradient: Callable[[np.ndarray], np.ndarray],
    packet_width: float,
    jitter: float,
    count: int,
    seed: int,
    window: Optional[tuple[float, float]] = None,
) -> tuple[list[ComplexBeam], np.ndarray]:
    """Mixed state of Gaussian packets approximating |A₀|² δ(p - ∇S(x)).

    Packet centres are drawn uniformly in ``window``, weighted by |A₀(c)|²,
    and each centre carries the two momenta ∇S(c) ± jitter with equal weight.
    """
    _require_1d(grid, "wkb_ensemble")
    if packet_width <= 0 or count < 1:
        raise ValueError("packet width must be positive and count at least 1")
    low, high = window or (-grid.length / 4, grid.length / 4)
    rng = stream(seed, Stream.ENSEMBLE)
    centres = np.sort(rng.uniform(low, high, size=count))
    density = np.abs(amplitude(centres)) ** 2
    if density.sum() == 0:
        raise ValueError("amplitude vanishes on the sampling window")
    beams = []
    weights = []
    for centre, weight, momentum in zip(centres, density, phase_gradient(centres)):
        for sign in (-1.0, 1.0) if jitter > 0 else (0.0,):
            beams.append(
                gaussian_beam(
                    grid,
                    width=packet_width,
                    centre=float(centre),
                    momentum=float(momentum) + sign * jitter,
                )
            )
            weights.append(weight)
    weights_array = np.asarray(weights) / np.sum(weights)
    return beams, weights_array


def momentum_spread(wigner: WignerGrid, x_index: int, centre: float) -> float:
    """Root-mean-square p about ``centre`` of the p-profile at one x."""
    row = wigner.values[x_index]
    p = wigner.phase.p_axis()
    mass = row.sum()
    if mass <= 0:
        return math.nan
    return float(math.sqrt(max(np.sum(row * (p - centre) ** 2) / mass, 0.0)))


def wkb_target(
    phase: PhaseSpaceGrid,
    amplitude: Callable[[np.ndarray], np.ndarray],
    phase_gradient: Callable[[np.ndarray], np.ndarray],
    width: float,
) -> WignerGrid:
    """Smeared WKB distribution |A₀(x)|² N(p - ∇S(x); width²)."""
    if width <= 0:
        raise ValueError("smoothing width must be positive")
    x, p = phase.mesh()
    centre = phase_gradient(phase.x_axis())[:, None]
    norm = math.sqrt(2 * math.pi * width**2)
    gaussian = np.exp(-((p - centre) ** 2) / (2 * width**2)) / norm
    values = (np.abs(amplitude(phase.x_axis())) ** 2)[:, None] * gaussian
    return WignerGrid(values=values, phase=phase)


def gaussian_density(
    phase: PhaseSpaceGrid,
    mean: tuple[float, float] = (0.0, 0.0),
    covariance: tuple[float, float, float] = (1.0, 1.0, 0.0),
    mass: float = 1.0,
) -> WignerGrid:
    """Bivariate normal density with covariance ``(var_x, var_p, cov_xp)``."""
    var_x, var_p, cov = covariance
    determinant = var_x * var_p - cov**2
    if var_x <= 0 or var_p <= 0 or determinant <= 0:
        raise ValueError("covariance must be positive definite")
    x, p = phase.mesh()
    dx = x - mean[0]
    dp = p - mean[1]
    quadratic = (var_p * dx**2 - 2 * cov * dx * dp + var_x * dp**2) / determinant
    values = mass * np.exp(-quadratic / 2) / (2 * math.pi * math.sqrt(determinant))
    return WignerGrid(values=values, phase=phase)


def transport_free(wigner: WignerGrid, z: float, ktilde: float) -> WignerGrid:
    """W(x - zp/k̃, p) by exact Fourier shifts along x on the periodic box."""
    phase = wigner.phase
    xi = 2 * np.pi * fft.fftfreq(phase.points, d=phase.dx)
    shifts = phase.p_axis() * z / ktilde
    coefficients = fft.fft(wigner.values, axis=0)
    coefficients *= np.exp(-1j * xi[:, None] * shifts[None, :])
    values = fft.ifft(coefficients, axis=0).real
    return wigner.with_values(values, z=wigner.z + z)
