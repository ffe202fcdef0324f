"""Grid and Monte Carlo solvers for the Liouville moment equations.

The first moment with a background solves
``∂_zF + (p/k̃)∂_xF + k̃∂_xV₀∂_pF = (k̃²/2)μ²D(0)∂²_pF``; the two-point moment
adds the cross diffusion ``k̃²μ(x₁)μ(x₂)D(x₁ - x₂)∂_{p₁}∂_{p₂}``.
"""
import math
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
import structlog
from scipy import fft
from scipy.ndimage import map_coordinates

from .background import BackgroundModel
from .exceptions import DimensionError
from .exceptions import GridMismatchError
from .exceptions import OutOfRangeError
from .exceptions import StepSizeError
from .moments import MAX_MEMORY_BYTES
from .moments import MomentField
from .moments import Regime
from .moments import WhiteNoiseModel
from .moments import _warn_p_edges
from .moments import check_aliasing
from .moments import check_two_point_memory
from .moments import from_y
from .moments import smooth
from .moments import solve_mean_liouville
from .moments import to_y
from .moments import xi_axis
from .moments import y_axis
from .rays import concatenate_members
from .rays import estimate_phase_space_density
from .rays import sample_rays
from .rays import trace_rays_sde
from .spectra import DiffusionTable
from .wigner import PhaseSpaceGrid
from .wigner import WignerGrid

logger = structlog.get_logger()

CFL_CELLS = 1.0
MAX_ORDER = 4


def _along(vector: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vector.shape[0]
    return vector.reshape(shape)


def _positions(phase: PhaseSpaceGrid) -> np.ndarray:
    return phase.x_axis()[:, None]


def _drift(
    values: np.ndarray,
    phase: PhaseSpaceGrid,
    tau: float,
    ktilde: float,
    x_axis: int,
    p_axis: int,
) -> np.ndarray:
    """F(x - pτ/k̃, p) along one (x, p) pair of axes."""
    ndim = values.ndim
    xi = _along(xi_axis(phase), x_axis, ndim)
    p = _along(phase.p_axis(), p_axis, ndim)
    coefficients = fft.fft(values, axis=x_axis) * np.exp(-1j * xi * p * tau / ktilde)
    return fft.ifft(coefficients, axis=x_axis).real


def _kick(
    values: np.ndarray,
    phase: PhaseSpaceGrid,
    shift: np.ndarray,
    x_axis: int,
    p_axis: int,
) -> np.ndarray:
    """F(x, p - Δp(x)) along one (x, p) pair of axes."""
    ndim = values.ndim
    y = _along(y_axis(phase), p_axis, ndim)
    delta = _along(shift, x_axis, ndim)
    transformed = to_y(values, phase, axis=p_axis) * np.exp(-1j * y * delta)
    return from_y(transformed, phase, axis=p_axis).real


def _kick_shift(
    background: BackgroundModel,
    phase: PhaseSpaceGrid,
    z: float,
    tau: float,
    ktilde: float,
) -> Optional[np.ndarray]:
    if background.v0.is_constant:
        return None
    return ktilde * background.v0.gradient(z, _positions(phase))[:, 0] * tau


def _check_kicks(
    background: BackgroundModel,
    phase: PhaseSpaceGrid,
    z: float,
    h: float,
    ktilde: float,
    cfl: float,
) -> None:
    shift = _kick_shift(background, phase, z, h, ktilde)
    if shift is None:
        return
    largest = float(np.max(np.abs(shift)))
    limit = cfl * phase.dp
    if largest > limit:
        raise StepSizeError("background kick k̃|∂V₀|dz per step", largest, limit)


def _steps(z: float, nsteps: Optional[int], dz: Optional[float]) -> tuple[int, float]:
    if nsteps is None:
        if dz is None:
            raise ValueError("either nsteps or dz is required")
        nsteps = max(1, math.ceil(z / dz - 1e-9))
    if nsteps < 1:
        raise ValueError("nsteps must be positive")
    return nsteps, z / nsteps


def solve_mean_inhomogeneous(
    initial: WignerGrid,
    model: WhiteNoiseModel,
    z: float,
    nsteps: Optional[int] = None,
    dz: Optional[float] = None,
    cfl: float = CFL_CELLS,
) -> MomentField:
    """Strang splitting K(h/2) T(h/2) D(h) T(h/2) K(h/2) of the kinetic equation.

    Transport and background kicks are exact Fourier shifts; diffusion is the
    exact multiplier with the coefficient frozen at the step midpoint.
    """
    model.require(Regime.LIOUVILLE)
    if model.spectrum.dim != 1:
        raise DimensionError("solve_mean_inhomogeneous", model.spectrum.dim, [1])
    nsteps, h = _steps(z, nsteps, dz)
    phase = initial.phase
    background = model.background
    ktilde = model.ktilde
    _check_kicks(background, phase, initial.z, h, ktilde, cfl)
    check_aliasing(initial)
    d0 = model.diffusion_origin() if model.spectrum.amplitude > 0 else 0.0
    y = y_axis(phase)[None, :]
    x = _positions(phase)
    values = np.array(initial.values, dtype=float)
    for step in range(nsteps):
        start = initial.z + step * h
        middle = start + h / 2
        shift = _kick_shift(background, phase, start, h / 2, ktilde)
        if shift is not None:
            values = _kick(values, phase, shift, 0, 1)
        values = _drift(values, phase, h / 2, ktilde, 0, 1)
        if d0 > 0:
            mu = background.mu.value(middle, x)[:, None]
            multiplier = np.exp(-(ktilde**2) / 2 * mu**2 * d0 * y**2 * h)
            values = from_y(to_y(values, phase) * multiplier, phase).real
        values = _drift(values, phase, h / 2, ktilde, 0, 1)
        shift = _kick_shift(background, phase, start + h, h / 2, ktilde)
        if shift is not None:
            values = _kick(values, phase, shift, 0, 1)
    _warn_p_edges(values, "mean_inhomogeneous")
    logger.debug("Solved inhomogeneous mean", z=z, nsteps=nsteps)
    return MomentField(
        order=1, z=initial.z + z, values=values, phase=phase, method="inhomogeneous"
    )


# Two-point grid solver -----------------------------------------------------------


def _cross_diffusion(
    model: WhiteNoiseModel, phase: PhaseSpaceGrid, table: Optional[DiffusionTable]
) -> np.ndarray:
    """D(x₁ - x₂) on the (x₁, x₂) grid."""
    if model.spectrum.amplitude == 0:
        return np.zeros((phase.points, phase.points))
    table = table or DiffusionTable(model.spectrum)
    x = phase.x_axis()
    separations = (x[:, None] - x[None, :])[..., None]
    return table(separations)[..., 0, 0]


def solve_two_point_grid(
    initial: Sequence[WignerGrid],
    model: WhiteNoiseModel,
    z: float,
    nsteps: Optional[int] = None,
    dz: Optional[float] = None,
    table: Optional[DiffusionTable] = None,
    cfl: float = CFL_CELLS,
    max_memory_bytes: float = MAX_MEMORY_BYTES,
) -> MomentField:
    """F⁽²⁾ on the four-dimensional phase space ``(x₁, p₁, x₂, p₂)`` for d = 1."""
    model.require(Regime.LIOUVILLE)
    if model.spectrum.dim != 1:
        raise DimensionError("solve_two_point_grid", model.spectrum.dim, [1])
    first, second = initial
    phase = first.phase
    if not phase.same_as(second.phase):
        raise GridMismatchError(
            "both members of the pair must share one phase-space grid"
        )
    check_two_point_memory(phase, max_memory_bytes, "solve_two_point_grid")
    nsteps, h = _steps(z, nsteps, dz)
    background = model.background
    ktilde = model.ktilde
    _check_kicks(background, phase, first.z, h, ktilde, cfl)
    check_aliasing(first)
    check_aliasing(second)
    d0 = model.diffusion_origin() if model.spectrum.amplitude > 0 else 0.0
    cross = _cross_diffusion(model, phase, table)[:, None, :, None]
    y1 = _along(y_axis(phase), 1, 4)
    y2 = _along(y_axis(phase), 3, 4)
    x = _positions(phase)
    values = np.einsum("ap,bq->apbq", first.values, second.values)
    logger.debug("Two-point grid solve", points=phase.points, nsteps=nsteps)

    def kick(values: np.ndarray, when: float) -> np.ndarray:
        shift = _kick_shift(background, phase, when, h / 2, ktilde)
        if shift is None:
            return values
        return _kick(_kick(values, phase, shift, 0, 1), phase, shift, 2, 3)

    def drift(values: np.ndarray) -> np.ndarray:
        values = _drift(values, phase, h / 2, ktilde, 0, 1)
        return _drift(values, phase, h / 2, ktilde, 2, 3)

    def diffuse(values: np.ndarray, middle: float) -> np.ndarray:
        if d0 == 0:
            return values
        mu = background.mu.value(middle, x)
        mu1 = _along(mu, 0, 4)
        mu2 = _along(mu, 2, 4)
        exponent = (
            mu1**2 * d0 * y1**2
            + mu2**2 * d0 * y2**2
            + 2 * mu1 * mu2 * cross * y1 * y2
        )
        transformed = to_y(to_y(values, phase, axis=1), phase, axis=3)
        transformed *= np.exp(-(ktilde**2) / 2 * h * exponent)
        return from_y(from_y(transformed, phase, axis=3), phase, axis=1).real

    for step in range(nsteps):
        start = first.z + step * h
        values = drift(kick(values, start))
        values = diffuse(values, start + h / 2)
        values = kick(drift(values), start + h)
    return MomentField(
        order=2, z=first.z + z, values=values, phase=phase, method="two_point_grid"
    )


def smooth_two_point(field: MomentField, bandwidth: tuple[float, float]) -> np.ndarray:
    """Convolution of F⁽²⁾ with the product of two normalized Gaussians."""
    assert field.values is not None and field.phase is not None
    hx, hp = bandwidth
    phase = field.phase
    xi1 = _along(xi_axis(phase), 0, 4)
    xi2 = _along(xi_axis(phase), 2, 4)
    y1 = _along(y_axis(phase), 1, 4)
    y2 = _along(y_axis(phase), 3, 4)
    transformed = fft.fftn(field.values, axes=(0, 2))
    transformed = to_y(to_y(transformed, phase, axis=1), phase, axis=3)
    transformed *= np.exp(-0.5 * (hx**2 * (xi1**2 + xi2**2) + hp**2 * (y1**2 + y2**2)))
    transformed = from_y(from_y(transformed, phase, axis=3), phase, axis=1)
    return fft.ifftn(transformed, axes=(0, 2)).real


def _grid_indices(phase: PhaseSpaceGrid, probes: np.ndarray) -> list[np.ndarray]:
    half = phase.points // 2
    indices = []
    for member in range(probes.shape[1]):
        indices.append(probes[:, member, 0] / phase.dx + half)
        indices.append(probes[:, member, 1] / phase.dp + half)
    return indices


def check_probes(phase: PhaseSpaceGrid, probes: np.ndarray) -> None:
    """Probes of shape ``(P, n, 2)`` must lie inside the phase-space grid."""
    half = phase.points // 2
    low_x, high_x = -half * phase.dx, (phase.points - 1 - half) * phase.dx
    low_p, high_p = -half * phase.dp, (phase.points - 1 - half) * phase.dp
    for value in probes[..., 0].ravel():
        if not low_x <= value <= high_x:
            raise OutOfRangeError(float(value), low_x, high_x, what="probe x")
    for value in probes[..., 1].ravel():
        if not low_p <= value <= high_p:
            raise OutOfRangeError(float(value), low_p, high_p, what="probe p")


def evaluate_probes(
    values: np.ndarray, phase: PhaseSpaceGrid, probes: np.ndarray
) -> np.ndarray:
    """Cubic interpolation of an n-point grid function at probes ``(P, n, 2)``."""
    check_probes(phase, probes)
    indices = _grid_indices(phase, probes)
    return map_coordinates(values, indices, order=3, mode="nearest")


# Dispatcher ----------------------------------------------------------------------


def solve_npoint_liouville(
    initial: Union[WignerGrid, Sequence[WignerGrid]],
    model: WhiteNoiseModel,
    n: int,
    z: float,
    probes: np.ndarray,
    method: str = "rays",
    bandwidth: Optional[tuple[float, float]] = None,
    count: int = 10_000,
    nsteps: int = 100,
    seed: int = 0,
    threads: int = 1,
    chunk_size: int = 1024,
    table: Optional[DiffusionTable] = None,
    max_memory_bytes: float = MAX_MEMORY_BYTES,
) -> MomentField:
    """F⁽ⁿ⁾ at probe points by correlated rays or, for n ≤ 2, on the grid.

    ``initial`` is one density shared by all members or one density per
    member (product form). Both paths report Gaussian-smoothed values with
    widths ``bandwidth``, by default two cells along each axis, so that their
    estimates are directly comparable.
    """
    model.require(Regime.LIOUVILLE)
    if not 1 <= n <= MAX_ORDER:
        orders = list(range(1, MAX_ORDER + 1))
        raise DimensionError("solve_npoint_liouville (order n)", n, orders)
    members = [initial] * n if isinstance(initial, WignerGrid) else list(initial)
    if len(members) != n:
        raise ValueError(f"expected {n} initial densities, got {len(members)}")
    phase = members[0].phase
    if not all(member.phase.same_as(phase) for member in members):
        raise GridMismatchError("all members must share one phase-space grid")
    probes = np.asarray(probes, dtype=float)
    if probes.ndim != 3 or probes.shape[1:] != (n, 2):
        raise ValueError(f"probes must have shape (P, {n}, 2)")
    check_probes(phase, probes)
    bandwidth = bandwidth or (2 * phase.dx, 2 * phase.dp)
    logger.info("Solving n-point moment", n=n, z=z, method=method, probes=len(probes))
    if method == "grid":
        if n == 1:
            solved = solve_mean_liouville(members[0], model, z)
            smoothed = smooth(solved.as_wigner(), bandwidth).values
            estimates = evaluate_probes(smoothed, phase, probes)
        elif n == 2:
            solved = solve_two_point_grid(
                members,
                model,
                z,
                nsteps=nsteps,
                table=table,
                max_memory_bytes=max_memory_bytes,
            )
            smoothed = smooth_two_point(solved, bandwidth)
            estimates = evaluate_probes(smoothed, phase, probes)
        else:
            raise DimensionError("grid solver (order n)", n, [1, 2])
        return MomentField(
            order=n,
            z=solved.z,
            values=solved.values,
            phase=phase,
            probes=probes,
            estimates=estimates,
            standard_errors=np.zeros(len(probes)),
            method="grid",
        )
    if method != "rays":
        raise ValueError(f"unknown method {method!r}, expected 'rays' or 'grid'")
    ensemble = concatenate_members(
        [
            sample_rays(member, count, seed, member=index)
            for index, member in enumerate(members)
        ]
    )
    traced = trace_rays_sde(
        ensemble,
        model,
        z,
        z / nsteps,
        seed,
        chunk_size=chunk_size,
        threads=threads,
        table=table,
    )
    return estimate_phase_space_density(traced, probes=probes, bandwidth=bandwidth)
