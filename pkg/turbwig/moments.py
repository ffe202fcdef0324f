"""White-noise limit models and their moment equations.

Phase-space functions live on a :class:`PhaseSpaceGrid` (d = 1). The mean
generator is ``(k̃²/2) Q̄₀`` with Q̄₀ built from Φ_eff; in the variable ``y``
conjugate to ``p`` it is the multiplier ``-(k̃²/2) g(y)``.

Transforms: ``F̂(ξ, ·) = Σ_x exp(-iξx) F dx`` and ``F̃(·, y) = Σ_p exp(-ipy) F dp``.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any
from typing import Optional

import numpy as np
import structlog
from pydantic import BaseModel
from pydantic import Field
from pydantic import PositiveFloat
from pydantic import root_validator
from scipy import fft
from scipy import integrate
from scipy.ndimage import map_coordinates

from .background import BackgroundModel
from .exceptions import AliasingError
from .exceptions import DimensionError
from .exceptions import RegimeViolation
from .exceptions import ResourceCeilingError
from .spectra import SpectrumModel
from .spectra import TransverseSpectrum
from .spectra import diffusion_origin
from .spectra import diffusion_tensor
from .spectra import transverse_spectrum
from .wigner import PhaseSpaceGrid
from .wigner import WignerGrid

logger = structlog.get_logger()

ALIASING_TOLERANCE = 1e-6
QUAD_VEC_EPSREL = 1e-11
QUAD_VEC_EPSABS = 1e-14
MAX_MEMORY_BYTES = 4 * 1024**3
TWO_POINT_WORK_COPIES = 4
WM_CROSS_WORK_COPIES = 8


class Regime(str, Enum):
    WIGNER_MOYAL = "wigner_moyal"
    LIOUVILLE = "liouville"


class WhiteNoiseModel(BaseModel):
    class Config:
        frozen = True

    regime: Regime
    spectrum: SpectrumModel
    gamma: Optional[PositiveFloat] = Field(
        None, description="Fresnel number, Wigner-Moyal regime only"
    )
    ktilde: PositiveFloat = 1.0
    background: BackgroundModel = Field(default_factory=BackgroundModel)

    @root_validator(skip_on_failure=True)
    def check_admissible(cls, values: dict[str, Any]) -> dict[str, Any]:
        spectrum: SpectrumModel = values["spectrum"]
        if values["regime"] == Regime.WIGNER_MOYAL:
            if values.get("gamma") is None:
                raise RegimeViolation("the Wigner-Moyal regime needs gamma > 0")
            if spectrum.eta == 0 and spectrum.H >= 0.5 and spectrum.amplitude > 0:
                raise RegimeViolation(
                    "eta > 0 or H < 1/2", f"eta = 0 with H = {spectrum.H:g}"
                )
        else:
            error = transverse_spectrum(spectrum).divergence(2)
            if error is not None:
                raise RegimeViolation(
                    "∫Φ_eff|q|² dq < ∞",
                    f"{error.end} divergence; requires {error.condition}",
                )
        return values

    @property
    def effective(self) -> TransverseSpectrum:
        return transverse_spectrum(self.spectrum)

    def require(self, regime: Regime) -> None:
        if self.regime != regime:
            raise RegimeViolation(
                f"{regime.value} regime", f"model is {self.regime.value}"
            )

    def diffusion_origin(self) -> float:
        return float(diffusion_origin(self.spectrum)[0, 0])


@dataclass(frozen=True)
class MomentField:
    order: int
    z: float
    values: Optional[np.ndarray] = None
    phase: Optional[PhaseSpaceGrid] = None
    probes: Optional[np.ndarray] = None
    estimates: Optional[np.ndarray] = None
    standard_errors: Optional[np.ndarray] = None
    method: str = "grid"

    def as_wigner(self) -> WignerGrid:
        if self.order != 1 or self.values is None or self.phase is None:
            raise ValueError("only grid-resolved first moments convert to a WignerGrid")
        return WignerGrid(values=self.values, phase=self.phase, z=self.z)

    @property
    def mass(self) -> float:
        if self.values is None or self.phase is None:
            raise ValueError("mass needs grid values")
        return float(np.sum(self.values) * self.phase.cell_area ** self.order)

    def l2_norm(self) -> float:
        if self.values is None or self.phase is None:
            raise ValueError("norm needs grid values")
        cell = self.phase.cell_area**self.order
        return float(math.sqrt(np.sum(self.values**2) * cell))


# Transforms -------------------------------------------------------------


def to_y(values: np.ndarray, phase: PhaseSpaceGrid, axis: int = -1) -> np.ndarray:
    """Σ_p exp(-ipy) F dp on the centred y-grid."""
    shifted = fft.ifftshift(values, axes=axis)
    return fft.fftshift(fft.fft(shifted, axis=axis), axes=axis) * phase.dp


def from_y(values: np.ndarray, phase: PhaseSpaceGrid, axis: int = -1) -> np.ndarray:
    shifted = fft.ifftshift(values, axes=axis)
    return fft.fftshift(fft.ifft(shifted, axis=axis), axes=axis) / phase.dp


def y_axis(phase: PhaseSpaceGrid) -> np.ndarray:
    indices = np.arange(phase.points) - phase.points // 2
    return indices * 2 * math.pi / (phase.points * phase.dp)


def xi_axis(phase: PhaseSpaceGrid) -> np.ndarray:
    """Wavenumbers along x in ``fft`` order."""
    return 2 * np.pi * fft.fftfreq(phase.points, d=phase.dx)


def transport_phase(phase: PhaseSpaceGrid, distance: float) -> np.ndarray:
    """Multiplier exp(-iξ p z/k̃) in the (ξ, p) representation, ``distance = z/k̃``."""
    p = phase.p_axis()
    return np.exp(-1j * np.outer(xi_axis(phase), p) * distance)


def _half_line_vec(integrand: Any, breaks: list[float]) -> np.ndarray:
    edges = [0.0] + breaks
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total = total + integrate.quad_vec(
            integrand, lo, hi, epsabs=QUAD_VEC_EPSABS, epsrel=QUAD_VEC_EPSREL
        )[0]
    tail = integrate.quad_vec(
        integrand, edges[-1], math.inf, epsabs=QUAD_VEC_EPSABS, epsrel=QUAD_VEC_EPSREL
    )[0]
    return np.asarray(total + tail)


def _one_minus_sinc(t: np.ndarray) -> np.ndarray:
    series = t**2 / 6 - t**4 / 120
    return np.where(np.abs(t) < 1e-3, series, 1 - np.sinc(t / math.pi))


# Operators ------------------------------------------------------------------


def g_function(model: WhiteNoiseModel, y: Any) -> np.ndarray:
    """g(y) = 2γ⁻² ∫Φ_eff(q)(1 - cos(γq·y)) dq for d = 1."""
    model.require(Regime.WIGNER_MOYAL)
    if model.spectrum.dim != 1:
        raise DimensionError("g_function", model.spectrum.dim, [1])
    y = np.asarray(y, dtype=float)
    if model.spectrum.amplitude == 0:
        return np.zeros_like(y)
    gamma = model.gamma
    assert gamma is not None
    radial = model.effective.radial
    flat = np.abs(y.ravel())

    def integrand(q: float) -> np.ndarray:
        return radial(q) * 2 * np.sin(gamma * q * flat / 2) ** 2

    values = 4 / gamma**2 * _half_line_vec(integrand, model.spectrum.breakpoints())
    return values.reshape(y.shape)


def apply_Q0_wm(theta: WignerGrid, model: WhiteNoiseModel) -> WignerGrid:
    """Q̄₀θ = ∫Φ_eff γ⁻²[θ(p - γq) - 2θ + θ(p + γq)] dq via the multiplier -g(y)."""
    model.require(Regime.WIGNER_MOYAL)
    multiplier = -g_function(model, y_axis(theta.phase))
    values = from_y(to_y(theta.values, theta.phase) * multiplier, theta.phase).real
    return theta.with_values(values)


def apply_Q0_liouville(theta: WignerGrid, model: WhiteNoiseModel) -> WignerGrid:
    """D(0) ∂²_p θ by spectral differentiation."""
    d0 = model.diffusion_origin()
    y = y_axis(theta.phase)
    values = from_y(to_y(theta.values, theta.phase) * (-d0 * y**2), theta.phase).real
    return theta.with_values(values)


@dataclass(frozen=True)
class CrossKernel:
    """Two-point density K(x₁, p₁, x₂, p₂) of the cross covariance operator."""

    values: np.ndarray
    phase: PhaseSpaceGrid
    regime: Regime

    def diagonal_sum(self) -> float:
        """Σ_{x,p} K(x, p, x, p) dx dp."""
        n = self.phase.points
        idx = np.arange(n)
        diagonal = self.values[idx[:, None], idx[None, :], idx[:, None], idx[None, :]]
        return float(np.sum(diagonal) * self.phase.cell_area)


def two_point_memory(points: int, copies: int = TWO_POINT_WORK_COPIES) -> float:
    """Bytes of a float64 function on (x₁, p₁, x₂, p₂) with its work copies."""
    return 8.0 * float(points) ** 4 * (2 + copies)


def check_two_point_memory(
    phase: PhaseSpaceGrid,
    max_memory_bytes: float,
    where: str,
    copies: int = TWO_POINT_WORK_COPIES,
) -> None:
    estimate = two_point_memory(phase.points, copies)
    if estimate > max_memory_bytes:
        raise ResourceCeilingError(
            f"memory (bytes) of {where}", estimate, max_memory_bytes
        )


def _separations(phase: PhaseSpaceGrid) -> np.ndarray:
    x = phase.x_axis()
    return x[:, None] - x[None, :]


def apply_Q_cross(
    theta1: WignerGrid,
    theta2: WignerGrid,
    model: WhiteNoiseModel,
    max_memory_bytes: float = MAX_MEMORY_BYTES,
) -> CrossKernel:
    """Kernel of the two-point covariance operator applied to θ₁ ⊗ θ₂.

    Liouville: ∂_pθ₁(x₁,p₁) D(x₁ - x₂) ∂_pθ₂(x₂,p₂). Wigner-Moyal: the finite
    difference analogue ∫Φ_eff e^{iq(x₁-x₂)} γ⁻² δ_qθ₁ δ_qθ₂ dq with
    δ_qθ = θ(p - γq/2) - θ(p + γq/2).
    """
    phase = theta1.phase
    if not phase.same_as(theta2.phase):
        raise ValueError("both test functions must live on the same grid")
    if model.spectrum.dim != 1:
        raise DimensionError("apply_Q_cross", model.spectrum.dim, [1])
    liouville = model.regime == Regime.LIOUVILLE
    copies = TWO_POINT_WORK_COPIES if liouville else WM_CROSS_WORK_COPIES
    check_two_point_memory(phase, max_memory_bytes, "apply_Q_cross", copies)
    separations = _separations(phase)
    y = y_axis(phase)
    first = to_y(theta1.values, phase)
    second = to_y(theta2.values, phase)
    if model.regime == Regime.LIOUVILLE:
        unique, inverse = np.unique(np.abs(separations), return_inverse=True)
        table = np.array(
            [diffusion_tensor(model.spectrum, [r]).value[0, 0] for r in unique]
        )
        diffusion = table[inverse].reshape(separations.shape)
        d1 = from_y(first * 1j * y, phase).real
        d2 = from_y(second * 1j * y, phase).real
        values = np.einsum("ap,ab,bq->apbq", d1, diffusion, d2)
        return CrossKernel(values=values, phase=phase, regime=model.regime)
    gamma = model.gamma
    assert gamma is not None
    radial = model.effective.radial
    sep = separations[:, :, None, None]
    half1 = gamma * y[None, None, :, None] / 2
    half2 = gamma * y[None, None, None, :] / 2

    def integrand(q: float) -> np.ndarray:
        return radial(q) * np.cos(q * sep) * np.sin(q * half1) * np.sin(q * half2)

    kappa = -8 / gamma**2 * _half_line_vec(integrand, model.spectrum.breakpoints())
    # K̃(x1, y1, x2, y2) = θ̃1 θ̃2 κ(x1 - x2, y1, y2)
    spectral = np.einsum("ay,bw,abyw->aybw", first, second, kappa)
    values = from_y(from_y(spectral, phase, axis=1), phase, axis=3).real
    return CrossKernel(values=values, phase=phase, regime=model.regime)


# Aliasing --------------------------------------------------------------------


def _edge_residue(transformed: np.ndarray, axis: int, fraction: float = 0.1) -> float:
    magnitude = np.abs(transformed)
    peak = float(magnitude.max())
    if peak == 0:
        return 0.0
    n = magnitude.shape[axis]
    band = max(1, int(n * fraction / 2))
    moved = np.moveaxis(magnitude, axis, 0)
    edges = np.concatenate([moved[:band], moved[-band:]])
    return float(edges.max()) / peak


def check_aliasing(wigner: WignerGrid) -> None:
    """Initial data must decay towards the edges of the ξ and y grids."""
    x_spectrum = fft.fftshift(fft.fft(wigner.values, axis=0), axes=0)
    residue = _edge_residue(x_spectrum, axis=0)
    if residue > ALIASING_TOLERANCE:
        raise AliasingError("xi", residue, ALIASING_TOLERANCE)
    residue = _edge_residue(to_y(wigner.values, wigner.phase), axis=1)
    if residue > ALIASING_TOLERANCE:
        raise AliasingError("y", residue, ALIASING_TOLERANCE)


def _warn_p_edges(values: np.ndarray, where: str) -> None:
    residue = _edge_residue(values, axis=1, fraction=0.05)
    if residue > ALIASING_TOLERANCE:
        logger.warning(
            "Solution reaches the edge of the p-grid", solver=where, residue=residue
        )


# Exact Fourier solvers ---------------------------------------------------


def wm_exponent(model: WhiteNoiseModel, phase: PhaseSpaceGrid, z: float) -> np.ndarray:
    """h(ξ, y) = ∫₀^z g(y + sξ/k̃) ds on the (ξ in fft order) × (centred y) grid."""
    gamma = model.gamma
    assert gamma is not None
    radial = model.effective.radial
    v = xi_axis(phase)[:, None] / model.ktilde
    y = y_axis(phase)[None, :]
    centre = y + z * v / 2
    half = z * v / 2

    def integrand(q: float) -> np.ndarray:
        a = gamma * q * centre
        b = gamma * q * half
        bracket = 2 * np.sin(a / 2) ** 2 + np.cos(a) * _one_minus_sinc(b)
        return radial(q) * bracket

    return 4 * z / gamma**2 * _half_line_vec(integrand, model.spectrum.breakpoints())


def _solve_with_exponent(
    initial: WignerGrid,
    model: WhiteNoiseModel,
    z: float,
    exponent: np.ndarray,
    where: str,
) -> MomentField:
    phase = initial.phase
    transport = transport_phase(phase, z / model.ktilde)
    transformed = fft.fft(initial.values, axis=0) * transport
    spectral = to_y(transformed, phase, axis=1)
    spectral *= np.exp(-(model.ktilde**2) / 2 * exponent)
    values = fft.ifft(from_y(spectral, phase, axis=1), axis=0).real
    _warn_p_edges(values, where)
    logger.debug("Solved mean moment", solver=where, z=z)
    return MomentField(
        order=1, z=initial.z + z, values=values, phase=phase, method=where
    )


def solve_mean_wm(initial: WignerGrid, model: WhiteNoiseModel, z: float) -> MomentField:
    """Exact mean Wigner distribution of the white-noise Wigner-Moyal model."""
    model.require(Regime.WIGNER_MOYAL)
    if model.spectrum.dim != 1:
        raise DimensionError("solve_mean_wm", model.spectrum.dim, [1])
    if not model.background.is_homogeneous:
        raise RegimeViolation(
            "homogeneous background (mu = 1, constant V0)",
            "use solve_mean_inhomogeneous",
        )
    check_aliasing(initial)
    if model.spectrum.amplitude == 0 or z == 0:
        exponent = np.zeros(initial.phase.shape)
    else:
        exponent = wm_exponent(model, initial.phase, z)
    return _solve_with_exponent(initial, model, z, exponent, "mean_wm")


def liouville_exponent(
    model: WhiteNoiseModel, phase: PhaseSpaceGrid, z: float
) -> np.ndarray:
    """D(0) ∫₀^z (y + sξ/k̃)² ds in closed form."""
    d0 = model.diffusion_origin() if model.spectrum.amplitude > 0 else 0.0
    v = xi_axis(phase)[:, None] / model.ktilde
    y = y_axis(phase)[None, :]
    return d0 * (y**2 * z + y * v * z**2 + v**2 * z**3 / 3)


def solve_mean_liouville(
    initial: WignerGrid, model: WhiteNoiseModel, z: float
) -> MomentField:
    """Exact solution of the kinetic Fokker-Planck equation (k̃²/2) D(0) ∂²_p."""
    model.require(Regime.LIOUVILLE)
    if model.spectrum.dim != 1:
        raise DimensionError("solve_mean_liouville", model.spectrum.dim, [1])
    if not model.background.is_homogeneous:
        raise RegimeViolation(
            "homogeneous background (mu = 1, constant V0)",
            "use solve_mean_inhomogeneous",
        )
    check_aliasing(initial)
    exponent = liouville_exponent(model, initial.phase, z)
    return _solve_with_exponent(initial, model, z, exponent, "mean_liouville")


# Probe helpers ---------------------------------------------------------------


def smooth(field: WignerGrid, bandwidth: tuple[float, float]) -> WignerGrid:
    """Convolution with a normalized Gaussian of widths ``(h_x, h_p)``."""
    hx, hp = bandwidth
    phase = field.phase
    xi = xi_axis(phase)[:, None]
    y = y_axis(phase)[None, :]
    transformed = to_y(fft.fft(field.values, axis=0), phase, axis=1)
    transformed *= np.exp(-0.5 * (hx**2 * xi**2 + hp**2 * y**2))
    values = fft.ifft(from_y(transformed, phase, axis=1), axis=0).real
    return field.with_values(values)


def evaluate_at(field: WignerGrid, points: np.ndarray) -> np.ndarray:
    """Cubic interpolation at phase-space points of shape ``(P, 2)``."""
    phase = field.phase
    points = np.atleast_2d(points)
    half = phase.points // 2
    ix = points[:, 0] / phase.dx + half
    ip = points[:, 1] / phase.dp + half
    inside = (ix >= 0) & (ix <= phase.points - 1) & (ip >= 0) & (ip <= phase.points - 1)
    if not np.all(inside):
        raise ValueError("probe outside the phase-space grid")
    return map_coordinates(field.values, [ix, ip], order=3, mode="nearest")


def smoothed_probes(
    field: WignerGrid, points: np.ndarray, bandwidth: tuple[float, float]
) -> np.ndarray:
    return evaluate_at(smooth(field, bandwidth), points)


def momentum_moments(field: WignerGrid) -> tuple[float, float, float, float]:
    """Mass, p-variance, x-variance and x-p covariance of a phase-space density."""
    x, p = field.phase.mesh()
    weights = field.values * field.phase.cell_area
    mass = float(weights.sum())
    mean_x = float(np.sum(weights * x)) / mass
    mean_p = float(np.sum(weights * p)) / mass
    var_p = float(np.sum(weights * (p - mean_p) ** 2)) / mass
    var_x = float(np.sum(weights * (x - mean_x) ** 2)) / mass
    cov = float(np.sum(weights * (x - mean_x) * (p - mean_p))) / mass
    return mass, var_p, var_x, cov
