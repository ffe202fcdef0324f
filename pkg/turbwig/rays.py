"""Geometrical-optics characteristics.

Rays obey ``dx/dz = p/k̃`` and ``dp/dz = k̃ ∇V_tot`` with the total potential
``V₀ + (μ/ε) V(z/ε², x)``. The white-noise limit replaces the fluctuation by
jointly Gaussian momentum kicks with ``Cov(dp_j, dp_k) = k̃² μ_j μ_k D(x_j - x_k) dz``.
"""
import math
from dataclasses import dataclass
from dataclasses import replace
from typing import Optional
from typing import Sequence

import numpy as np
import structlog
from scipy import fft
from scipy.ndimage import map_coordinates

from .background import BackgroundModel
from .exceptions import DimensionError
from .exceptions import EstimatorError
from .exceptions import OutOfRangeError
from .exceptions import RegimeViolation
from .exceptions import StepSizeError
from .medium import FieldRealization
from .moments import MomentField
from .moments import Regime
from .moments import WhiteNoiseModel
from .parallel import map_chunks
from .spectra import DiffusionTable
from .streams import Stream
from .streams import stream
from .wigner import WignerGrid

logger = structlog.get_logger()

MAX_TUPLE_DOF = 16
PSD_TOLERANCE = -1e-10
JACKKNIFE_GROUPS = 20


@dataclass(frozen=True)
class RayEnsemble:
    """Tuples of rays: positions and momenta of shape ``(M, n, d)``."""

    positions: np.ndarray
    momenta: np.ndarray
    weights: np.ndarray
    seed: int = 0
    z: float = 0.0

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def order(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.positions.reshape(-1, self.dim),
            self.momenta.reshape(-1, self.dim),
        )

    def subset(self, indices: Sequence[int]) -> "RayEnsemble":
        return replace(
            self,
            positions=self.positions[list(indices)],
            momenta=self.momenta[list(indices)],
            weights=self.weights[list(indices)],
        )


def concatenate(parts: Sequence[RayEnsemble]) -> RayEnsemble:
    first = parts[0]
    return replace(
        first,
        positions=np.concatenate([part.positions for part in parts]),
        momenta=np.concatenate([part.momenta for part in parts]),
        weights=np.concatenate([part.weights for part in parts]),
        z=parts[-1].z,
    )


def concatenate_members(members: Sequence[RayEnsemble]) -> RayEnsemble:
    """Tuples whose j-th member is drawn from ``members[j]``; all share one count."""
    counts = {member.count for member in members}
    if len(counts) != 1:
        raise EstimatorError("product-form tuples need members of equal size")
    count = counts.pop()
    weights = np.prod([member.weights * count for member in members], axis=0) / count
    first = members[0]
    return replace(
        first,
        positions=np.concatenate([member.positions for member in members], axis=1),
        momenta=np.concatenate([member.momenta for member in members], axis=1),
        weights=weights,
    )


def gaussian_rays(
    count: int,
    seed: int,
    order: int = 1,
    dim: int = 1,
    mean: tuple[float, float] = (0.0, 0.0),
    covariance: tuple[float, float, float] = (1.0, 1.0, 0.0),
    mass: float = 1.0,
    index: int = 0,
) -> RayEnsemble:
    """Tuples of independent rays drawn from a phase-space normal density."""
    var_x, var_p, cov = covariance
    matrix = np.array([[var_x, cov], [cov, var_p]])
    factor = np.linalg.cholesky(matrix)
    rng = stream(seed, Stream.RAYS, index)
    draws = rng.standard_normal((count, order, dim, 2)) @ factor.T
    return RayEnsemble(
        positions=mean[0] + draws[..., 0],
        momenta=mean[1] + draws[..., 1],
        weights=np.full(count, mass**order / count),
        seed=seed,
    )


def sample_rays(
    initial: WignerGrid, count: int, seed: int, order: int = 1, member: int = 0
) -> RayEnsemble:
    """Tuples of independent rays distributed as a nonnegative phase-space density.

    ``member`` selects the random stream, so that the members of a product-form
    tuple can be drawn independently from different densities.
    """
    values = initial.values
    if np.min(values) < 0:
        negative = float(-values[values < 0].sum() * initial.phase.cell_area)
        logger.warning(
            "Negative phase-space mass ignored when sampling rays", mass=negative
        )
        values = np.clip(values, 0, None)
    mass = float(values.sum() * initial.phase.cell_area)
    if mass <= 0:
        raise EstimatorError("cannot sample rays from a density without positive mass")
    probabilities = (values / values.sum()).ravel()
    rng = stream(seed, Stream.RAYS, member)
    cells = rng.choice(probabilities.size, size=(count, order), p=probabilities)
    ix, ip = np.unravel_index(cells, values.shape)
    phase = initial.phase
    half = phase.points // 2
    jitter = rng.uniform(-0.5, 0.5, size=(count, order, 2))
    positions = (ix - half + jitter[..., 0]) * phase.dx
    momenta = (ip - half + jitter[..., 1]) * phase.dp
    return RayEnsemble(
        positions=positions[..., None],
        momenta=momenta[..., None],
        weights=np.full(count, mass**order / count),
        seed=seed,
        z=initial.z,
    )


# Deterministic tracer --------------------------------------------------------


class FieldSampler:
    """V and ∇V of a realization at arbitrary (z, x), periodic in x.

    Gradients are spectral; values between stored slices are linear in z and
    cubic in x.
    """

    def __init__(self, realization: FieldRealization) -> None:
        self.realization = realization
        grid = realization.grid
        self.grid = grid
        axes = tuple(range(1, grid.dim + 1))
        coefficients = fft.fftn(realization.values, axes=axes)
        k = grid.wavenumbers()
        gradients = []
        for axis in range(grid.dim):
            shape = [1] * (grid.dim + 1)
            shape[axis + 1] = grid.points
            derivative = coefficients * (1j * k).reshape(shape)
            if grid.points % 2 == 0:
                nyquist = [slice(None)] * (grid.dim + 1)
                nyquist[axis + 1] = grid.points // 2
                derivative[tuple(nyquist)] = 0
            gradients.append(fft.ifftn(derivative, axes=axes).real)
        self.gradients = np.stack(gradients, axis=-1)

    def _indices(self, x: np.ndarray) -> list[np.ndarray]:
        grid = self.grid
        return [x[:, axis] / grid.dx + grid.points // 2 for axis in range(grid.dim)]

    def _slice_weights(self, z: float) -> tuple[int, int, float]:
        realization = self.realization
        position = z / realization.epsilon**2 / realization.dz_field
        last = realization.nz - 1
        if position < -1e-12 or position > last + 1e-9:
            low, high = realization.z_range
            raise OutOfRangeError(z, low, high)
        position = min(max(position, 0.0), float(last))
        lower = min(int(math.floor(position)), max(last - 1, 0))
        upper = min(lower + 1, last)
        return lower, upper, position - lower

    def _interpolate(self, volume: np.ndarray, z: float, x: np.ndarray) -> np.ndarray:
        lower, upper, weight = self._slice_weights(z)
        indices = self._indices(x)
        low = map_coordinates(volume[lower], indices, order=3, mode="grid-wrap")
        if weight == 0.0 or upper == lower:
            return low
        high = map_coordinates(volume[upper], indices, order=3, mode="grid-wrap")
        return (1 - weight) * low + weight * high

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        return self._interpolate(self.realization.values, z, x)

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        return np.stack(
            [
                self._interpolate(self.gradients[..., axis], z, x)
                for axis in range(self.grid.dim)
            ],
            axis=-1,
        )


def _force(
    z: float,
    x: np.ndarray,
    sampler: Optional[FieldSampler],
    background: BackgroundModel,
    ktilde: float,
) -> np.ndarray:
    force = background.v0.gradient(z, x)
    if sampler is not None:
        epsilon = sampler.realization.epsilon
        mu = background.mu.value(z, x)[:, None]
        grad_mu = background.mu.gradient(z, x)
        fluctuation = sampler.value(z, x)[:, None]
        force = force + (mu * sampler.gradient(z, x) + fluctuation * grad_mu) / epsilon
    return ktilde * force


def ray_step_limit(realization: FieldRealization) -> float:
    """Largest dz resolving the fastest longitudinal variation of V(z/ε², ·)."""
    model = realization.model
    scale = min(model.rho, realization.grid.q_nyquist, math.pi / realization.dz_field)
    return realization.epsilon**2 / (4 * scale)


def trace_rays_medium(
    ensemble: RayEnsemble,
    realization: Optional[FieldRealization],
    background: Optional[BackgroundModel],
    z: float,
    dz: float,
    ktilde: float = 1.0,
) -> RayEnsemble:
    """Kick-drift-kick integration through a resolved medium over a distance ``z``."""
    background = background or BackgroundModel()
    sampler = None
    if realization is not None:
        limit = ray_step_limit(realization)
        if dz > limit:
            raise StepSizeError("ray step dz", dz, limit)
        low, high = realization.z_range
        if ensemble.z < low or ensemble.z + z > high + 1e-12:
            raise OutOfRangeError(ensemble.z + z, low, high)
        sampler = FieldSampler(realization)
    nsteps = max(1, math.ceil(z / dz - 1e-9))
    h = z / nsteps
    x, p = ensemble.flat()
    x = x.astype(float, copy=True)
    p = p.astype(float, copy=True)
    start = ensemble.z
    for step in range(nsteps):
        z0 = start + step * h
        p += 0.5 * h * _force(z0, x, sampler, background, ktilde)
        x += h * p / ktilde
        p += 0.5 * h * _force(z0 + h, x, sampler, background, ktilde)
    shape = ensemble.positions.shape
    return replace(
        ensemble, positions=x.reshape(shape), momenta=p.reshape(shape), z=start + z
    )


def harmonic_trajectory(
    x0: np.ndarray, p0: np.ndarray, omega: float, ktilde: float, z: float
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form rays in the graded-index background -ω²|x|²/2."""
    x = x0 * math.cos(omega * z) + p0 / (ktilde * omega) * math.sin(omega * z)
    p = p0 * math.cos(omega * z) - ktilde * omega * x0 * math.sin(omega * z)
    return x, p


# White-noise rays ------------------------------------------------------------


def block_covariance(
    positions: np.ndarray,
    table: DiffusionTable,
    background: BackgroundModel,
    z: float,
    ktilde: float,
    dz: float,
) -> np.ndarray:
    """Cov of the momentum kicks, shape ``(M, n·d, n·d)``."""
    count, order, dim = positions.shape
    separations = positions[:, :, None, :] - positions[:, None, :, :]
    blocks = table(separations)
    mu = background.mu.value(z, positions.reshape(-1, dim)).reshape(count, order)
    blocks = blocks * (mu[:, :, None] * mu[:, None, :])[..., None, None]
    matrix = blocks.transpose(0, 1, 3, 2, 4).reshape(count, order * dim, order * dim)
    return ktilde**2 * dz * matrix


def momentum_kicks(
    positions: np.ndarray,
    table: DiffusionTable,
    background: BackgroundModel,
    z: float,
    ktilde: float,
    dz: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Jointly Gaussian kicks via a symmetric factorization of the block covariance."""
    count, order, dim = positions.shape
    covariance = block_covariance(positions, table, background, z, ktilde, dz)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    scale = np.maximum(np.abs(eigenvalues).max(axis=-1), 1e-300)
    worst = float((eigenvalues.min(axis=-1) / scale).min())
    if worst < PSD_TOLERANCE:
        raise RegimeViolation(
            "positive semidefinite block covariance",
            f"relative eigenvalue {worst:.3g}; the diffusion tensor is inconsistent",
        )
    roots = np.sqrt(np.clip(eigenvalues, 0, None))
    noise = rng.standard_normal((count, order * dim))
    kicks = np.einsum("mij,mj->mi", eigenvectors * roots[:, None, :], noise)
    return kicks.reshape(count, order, dim)


def _trace_chunk(
    ensemble: RayEnsemble,
    table: DiffusionTable,
    model: WhiteNoiseModel,
    nsteps: int,
    h: float,
    rng: np.random.Generator,
) -> RayEnsemble:
    x = ensemble.positions.astype(float, copy=True)
    p = ensemble.momenta.astype(float, copy=True)
    background = model.background
    ktilde = model.ktilde
    count, order, dim = x.shape
    for step in range(nsteps):
        z = ensemble.z + step * h
        drift = ktilde * background.v0.gradient(z, x.reshape(-1, dim)).reshape(x.shape)
        kicks = momentum_kicks(x, table, background, z, ktilde, h, rng)
        x += h * p / ktilde
        p += h * drift + kicks
    return replace(ensemble, positions=x, momenta=p, z=ensemble.z + nsteps * h)


def trace_rays_sde(
    ensemble: RayEnsemble,
    model: WhiteNoiseModel,
    z: float,
    dz: float,
    seed: int,
    chunk_size: int = 1024,
    threads: int = 1,
    table: Optional[DiffusionTable] = None,
) -> RayEnsemble:
    """Euler-Maruyama for ray tuples of the white-noise Liouville limit."""
    model.require(Regime.LIOUVILLE)
    if ensemble.order * ensemble.dim > MAX_TUPLE_DOF:
        raise DimensionError(
            "trace_rays_sde (n·d)",
            ensemble.order * ensemble.dim,
            list(range(1, MAX_TUPLE_DOF + 1)),
        )
    if ensemble.dim != model.spectrum.dim:
        raise DimensionError("trace_rays_sde", ensemble.dim, [model.spectrum.dim])
    table = table or DiffusionTable(model.spectrum)
    nsteps = max(1, math.ceil(z / dz - 1e-9))
    h = z / nsteps

    def run(index: int, rows: Sequence[int]) -> RayEnsemble:
        rng = stream(seed, Stream.RAY_KICKS, index)
        return _trace_chunk(ensemble.subset(rows), table, model, nsteps, h, rng)

    parts = map_chunks(run, range(ensemble.count), chunk_size, threads)
    logger.debug(
        "Traced white-noise rays", count=ensemble.count, nsteps=nsteps, seed=seed
    )
    return replace(concatenate(parts), seed=seed)


# Density estimation --------------------------------------------------------------


def _groups(count: int) -> list[np.ndarray]:
    if count < 1:
        raise EstimatorError("cannot estimate a density from an empty ensemble")
    return np.array_split(np.arange(count), min(JACKKNIFE_GROUPS, count))


def _group_jackknife(per_group: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Totals and delete-one-group standard errors along the first axis.

    A single group has no error estimate and reports NaN.
    """
    groups = per_group.shape[0]
    total = np.sum(per_group, axis=0)
    if groups < 2:
        return total, np.full(total.shape, np.nan)
    leave_out = (total - per_group) * groups / (groups - 1)
    spread = np.sum((leave_out - leave_out.mean(axis=0)) ** 2, axis=0)
    return total, np.sqrt((groups - 1) / groups * spread)


def estimate_phase_space_density(
    ensemble: RayEnsemble,
    probes: Optional[np.ndarray] = None,
    bandwidth: Optional[tuple[float, float]] = None,
    bins: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> MomentField:
    """Kernel estimate at probes or weighted histogram, with jackknife errors.

    Probes have shape ``(P, n, 2)`` for d = 1: one ``(x, p)`` pair per tuple
    member. Histogram bins are ``(x_edges, p_edges)`` and need n = 1; empty
    bins come back as NaN.
    """
    if ensemble.dim != 1:
        raise DimensionError("estimate_phase_space_density", ensemble.dim, [1])
    groups = _groups(ensemble.count)
    x = ensemble.positions[..., 0]
    p = ensemble.momenta[..., 0]
    weights = ensemble.weights
    if bins is not None:
        if ensemble.order != 1:
            raise EstimatorError("histograms are only available for single rays")
        x_edges, p_edges = (np.asarray(edge, dtype=float) for edge in bins)
        for edges in (x_edges, p_edges):
            if len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise EstimatorError(
                    "bin edges must be increasing with at least two entries"
                )
        area = np.outer(np.diff(x_edges), np.diff(p_edges))
        per_group = np.array(
            [
                np.histogram2d(
                    x[g, 0], p[g, 0], bins=[x_edges, p_edges], weights=weights[g]
                )[0]
                for g in groups
            ]
        )
        counts = np.histogram2d(x[:, 0], p[:, 0], bins=[x_edges, p_edges])[0]
        total, error = _group_jackknife(per_group)
        density = np.where(counts > 0, total / area, np.nan)
        error = np.where(counts > 0, error / area, np.nan)
        xc = 0.5 * (x_edges[1:] + x_edges[:-1])
        pc = 0.5 * (p_edges[1:] + p_edges[:-1])
        mesh = np.stack(np.meshgrid(xc, pc, indexing="ij"), axis=-1)
        centres = mesh.reshape(-1, 1, 2)
        return MomentField(
            order=1,
            z=ensemble.z,
            probes=centres,
            estimates=density.ravel(),
            standard_errors=error.ravel(),
            method="histogram",
        )
    if probes is None or bandwidth is None:
        raise EstimatorError("kernel estimates need probes and a bandwidth")
    probes = np.asarray(probes, dtype=float)
    if probes.ndim != 3 or probes.shape[1:] != (ensemble.order, 2):
        raise EstimatorError(f"probes must have shape (P, {ensemble.order}, 2)")
    hx, hp = bandwidth
    if hx <= 0 or hp <= 0:
        raise EstimatorError("bandwidths must be positive")
    norm = (2 * math.pi * hx * hp) ** ensemble.order
    per_group = []
    for g in groups:
        dx = (x[g][None, :, :] - probes[:, None, :, 0]) / hx
        dp = (p[g][None, :, :] - probes[:, None, :, 1]) / hp
        kernel = np.exp(-0.5 * np.sum(dx**2 + dp**2, axis=-1)) / norm
        per_group.append(kernel @ weights[g])
    total, error = _group_jackknife(np.array(per_group))
    return MomentField(
        order=ensemble.order,
        z=ensemble.z,
        probes=probes,
        estimates=total,
        standard_errors=error,
        method="rays",
    )
