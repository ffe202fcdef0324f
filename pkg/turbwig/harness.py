"""Convergence experiments over scaling schedules.

Every schedule point runs ``ensemble_size`` realizations in fixed-size chunks.
Chunk results are reduced in chunk order, so reports depend on the seed and
the chunk size but never on the number of worker threads.
"""
import math
import time
from dataclasses import dataclass
from dataclasses import field
from typing import Callable
from typing import Optional
from typing import Sequence

import numpy as np
import structlog

from .beam import ComplexBeam
from .beam import gaussian_beam
from .beam import split_step_propagate
from .beam import white_noise_propagate
from .config import ExperimentConfig
from .config import Observable
from .config import Settings
from .config import config_hash
from .exceptions import RegimeViolation
from .exceptions import ResourceCeilingError
from .grid import SimGrid
from .kinetic import solve_mean_inhomogeneous
from .medium import synthesize_screens
from .medium import synthesize_volume
from .moments import MomentField
from .moments import Regime
from .moments import WhiteNoiseModel
from .moments import evaluate_at
from .moments import smoothed_probes
from .moments import solve_mean_liouville
from .moments import solve_mean_wm
from .parallel import map_chunks
from .rays import RayEnsemble
from .rays import concatenate
from .rays import estimate_phase_space_density
from .rays import gaussian_rays
from .rays import ray_step_limit
from .rays import trace_rays_medium
from .rays import trace_rays_sde
from .schedule import SchedulePoint
from .schedule import schedule_metric
from .spectra import SpectrumModel
from .wigner import PhaseSpaceGrid
from .wigner import gaussian_density
from .wigner import wigner_transform

logger = structlog.get_logger()

PHASE_SPREAD = 6.0


@dataclass(frozen=True)
class ProbeComparison:
    label: str
    empirical: float
    empirical_error: float
    prediction: float
    prediction_error: float = 0.0

    @property
    def z_score(self) -> float:
        scale = math.hypot(self.empirical_error, self.prediction_error)
        if scale == 0 or not math.isfinite(scale):
            return math.nan
        return (self.empirical - self.prediction) / scale


@dataclass(frozen=True)
class ConvergencePoint:
    index: int
    epsilon: float
    gamma: float
    eta: float
    rho: float
    metric: float
    empirical: float
    prediction: float
    error: float
    standard_error: float
    realizations: int
    seed: int
    first_stream: int
    probes: list[ProbeComparison] = field(default_factory=list)
    wall_clock: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class ConvergenceReport:
    kind: str
    config_hash: str
    seed: int
    case: Optional[str]
    H: float
    points: list[ConvergencePoint]
    physical: dict[str, float] = field(default_factory=dict)

    def errors(self) -> np.ndarray:
        return np.array([point.error for point in self.points])

    def decreasing(self, sigmas: float = 1.0) -> bool:
        """Each error lies ``sigmas`` combined errors below its predecessor."""
        for before, after in zip(self.points, self.points[1:]):
            margin = sigmas * math.hypot(before.standard_error, after.standard_error)
            if not before.error - after.error > margin:
                return False
        return True


# Shared helpers ------------------------------------------------------------------


def _point_grid(config: ExperimentConfig, point: SchedulePoint) -> SimGrid:
    return config.grid.with_scaling(epsilon=point.epsilon, gamma=point.gamma)


def _point_spectrum(config: ExperimentConfig, point: SchedulePoint) -> SpectrumModel:
    return config.spectrum.copy(update={"eta": point.eta, "rho": point.rho})


def _dz_field(config: ExperimentConfig, grid: SimGrid) -> float:
    return config.dz_field or grid.dx


def slices_needed(config: ExperimentConfig, grid: SimGrid) -> int:
    """Stored slices covering z/ε² of unscaled medium, one spare at the end."""
    if config.nz is not None:
        return config.nz
    span = config.z / (grid.epsilon**2 * _dz_field(config, grid))
    return int(math.ceil(span)) + 2


def estimate_resources(
    config: ExperimentConfig, settings: Settings
) -> tuple[float, float]:
    """Estimated (peak bytes, work units) of a convergence run."""
    points = config.schedule_points()
    cells = config.grid.points**config.grid.dim
    memory = 0.0
    work = 0.0
    for point in points:
        grid = _point_grid(config, point)
        nz = slices_needed(config, grid) if config.medium == "volume" else config.nsteps
        if config.regime == Regime.WIGNER_MOYAL:
            volume = 8.0 * nz * cells * settings.threads
            chunks = math.ceil(config.ensemble_size / settings.chunk_size)
            phase = 8.0 * config.grid.points**2 * (4 + chunks)
            memory = max(memory, volume + phase)
            work += cells * (config.nsteps + nz) * config.ensemble_size
        else:
            rays = config.rays.count
            volume = 16.0 * nz * cells * settings.threads
            memory = max(memory, volume + 64.0 * rays)
            steps = math.ceil(config.z / ray_step_bound(config, grid, point))
            work += rays * steps + nz * cells * config.ensemble_size
    return memory, work


def check_resources(config: ExperimentConfig, settings: Settings) -> None:
    memory, work = estimate_resources(config, settings)
    if memory > settings.max_memory_bytes:
        raise ResourceCeilingError("memory (bytes)", memory, settings.max_memory_bytes)
    if work > settings.max_work_units:
        raise ResourceCeilingError("work units", work, settings.max_work_units)
    logger.info("Resource estimate", memory=memory, work=work)


def ray_step_bound(
    config: ExperimentConfig, grid: SimGrid, point: SchedulePoint
) -> float:
    scale = min(point.rho, grid.q_nyquist, math.pi / _dz_field(config, grid))
    return min(config.z / config.rays.nsteps, point.epsilon**2 / (4 * scale))


def _chunk_jackknife(
    sums: np.ndarray, counts: np.ndarray, statistic: Callable[[np.ndarray], float]
) -> float:
    """Delete-one-chunk jackknife error of a statistic of the pooled mean."""
    groups = len(counts)
    if groups < 2:
        return math.nan
    total = sums.sum(axis=0)
    size = counts.sum()
    values = np.array(
        [statistic((total - sums[c]) / (size - counts[c])) for c in range(groups)]
    )
    spread = np.sum((values - values.mean()) ** 2)
    return float(math.sqrt((groups - 1) / groups * spread))


def _relative_l2(estimate: np.ndarray, reference: np.ndarray) -> float:
    norm = float(np.linalg.norm(reference))
    if norm == 0:
        return float(np.linalg.norm(estimate))
    return float(np.linalg.norm(estimate - reference)) / norm


# Wigner-Moyal ----------------------------------------------------------------------


@dataclass(frozen=True)
class _WignerChunk:
    total: np.ndarray
    count: int
    products: np.ndarray
    squares: np.ndarray


def _probe_points(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.asarray(config.second_moment_probes, dtype=float).reshape(-1, 2, 2)
    return pairs[:, 0, :], pairs[:, 1, :]


def _wigner_ensemble(
    propagate: Callable[[int], ComplexBeam],
    count: int,
    settings: Settings,
    phase: PhaseSpaceGrid,
    probes: tuple[np.ndarray, np.ndarray],
) -> list[_WignerChunk]:
    first, second = probes

    def run(chunk_index: int, indices: Sequence[int]) -> _WignerChunk:
        wigners = [
            wigner_transform(propagate(index), target=phase) for index in indices
        ]
        total = np.sum(np.stack([wigner.values for wigner in wigners]), axis=0)
        if len(first):
            products = np.stack(
                [
                    evaluate_at(wigner, first) * evaluate_at(wigner, second)
                    for wigner in wigners
                ]
            )
        else:
            products = np.zeros((len(wigners), 0))
        return _WignerChunk(
            total=total,
            count=len(wigners),
            products=np.sum(products, axis=0),
            squares=np.sum(products**2, axis=0),
        )

    return map_chunks(run, range(count), settings.chunk_size, settings.threads)


def _pair_label(first: np.ndarray, second: np.ndarray) -> str:
    return f"W({first[0]:g},{first[1]:g})W({second[0]:g},{second[1]:g})"


def _mean_and_error(chunks: list[_WignerChunk]) -> tuple[np.ndarray, np.ndarray]:
    count = sum(chunk.count for chunk in chunks)
    products = np.sum(np.stack([chunk.products for chunk in chunks]), axis=0) / count
    squares = np.sum(np.stack([chunk.squares for chunk in chunks]), axis=0) / count
    variance = np.maximum(squares - products**2, 0.0) * count / max(count - 1, 1)
    return products, np.sqrt(variance / count)


def _wm_point(
    config: ExperimentConfig, settings: Settings, index: int, point: SchedulePoint
) -> ConvergencePoint:
    start = time.perf_counter()
    grid = _point_grid(config, point)
    spectrum = _point_spectrum(config, point)
    model = WhiteNoiseModel(
        regime=Regime.WIGNER_MOYAL,
        spectrum=spectrum,
        gamma=point.gamma,
        ktilde=grid.ktilde,
        background=config.background,
    )
    beam = gaussian_beam(
        grid,
        width=config.beam.width,
        centre=config.beam.centre,
        momentum=config.beam.momentum,
        chirp=config.beam.chirp,
    )
    initial = wigner_transform(beam)
    phase = initial.phase
    limit = solve_mean_wm(initial, model, config.z)
    assert limit.values is not None
    reference_values = limit.values
    count = config.ensemble_size
    offset = index * count
    dz = config.z / config.nsteps
    nz = slices_needed(config, grid)
    field_step = grid.epsilon**2 * _dz_field(config, grid)
    if config.medium == "volume" and dz > field_step:
        logger.warning(
            "Split step coarser than the scaled medium slices",
            dz=dz,
            slice_spacing=field_step,
        )

    def through_medium(stream_index: int) -> ComplexBeam:
        realization = synthesize_volume(
            spectrum,
            grid,
            nz,
            config.seed,
            dz_field=_dz_field(config, grid),
            index=stream_index,
            truncate_infrared=config.truncate_infrared,
        )
        return split_step_propagate(
            beam, realization, config.background, dz, config.nsteps
        )

    def through_screens(stream_index: int) -> ComplexBeam:
        screens = synthesize_screens(
            spectrum,
            grid,
            config.nsteps,
            dz,
            config.seed,
            index=stream_index,
            truncate_infrared=config.truncate_infrared,
        )
        return white_noise_propagate(beam, screens, config.background)

    probes = _probe_points(config)
    wants_probes = Observable.SECOND_MOMENT in config.observables and len(probes[0]) > 0
    active = probes if wants_probes else (np.zeros((0, 2)), np.zeros((0, 2)))
    propagate = through_medium if config.medium == "volume" else through_screens
    chunks = _wigner_ensemble(
        lambda r: propagate(offset + r), count, settings, phase, active
    )
    sums = np.stack([chunk.total for chunk in chunks])
    counts = np.array([chunk.count for chunk in chunks])
    mean = sums.sum(axis=0) / counts.sum()
    error = _relative_l2(mean, reference_values)
    standard_error = _chunk_jackknife(
        sums, counts, lambda estimate: _relative_l2(estimate, reference_values)
    )
    comparisons: list[ProbeComparison] = []
    if wants_probes:
        empirical, empirical_error = _mean_and_error(chunks)
        reference = _wigner_ensemble(
            lambda r: through_screens(offset + r), count, settings, phase, active
        )
        predicted, predicted_error = _mean_and_error(reference)
        first, second = active
        for k in range(len(first)):
            comparisons.append(
                ProbeComparison(
                    label=_pair_label(first[k], second[k]),
                    empirical=float(empirical[k]),
                    empirical_error=float(empirical_error[k]),
                    prediction=float(predicted[k]),
                    prediction_error=float(predicted_error[k]),
                )
            )
    logger.info(
        "Schedule point done",
        index=index,
        epsilon=point.epsilon,
        error=error,
        standard_error=standard_error,
    )
    return ConvergencePoint(
        index=index,
        epsilon=point.epsilon,
        gamma=point.gamma,
        eta=point.eta,
        rho=point.rho,
        metric=schedule_metric(point, spectrum.H),
        empirical=float(np.linalg.norm(mean) * math.sqrt(phase.cell_area)),
        prediction=limit.l2_norm(),
        error=error,
        standard_error=standard_error,
        realizations=count,
        seed=config.seed,
        first_stream=offset,
        probes=comparisons,
        wall_clock=time.perf_counter() - start,
    )


def run_convergence_wm(
    config: ExperimentConfig, settings: Optional[Settings] = None
) -> ConvergenceReport:
    """Empirical mean Wigner distribution against the white-noise limit, per point."""
    settings = settings or Settings()
    if config.regime != Regime.WIGNER_MOYAL:
        raise RegimeViolation("wigner_moyal regime", f"config is {config.regime.value}")
    points = config.schedule_points()
    check_resources(config, settings)
    logger.info("Wigner-Moyal convergence run", points=len(points), seed=config.seed)
    results = [
        _wm_point(config, settings, index, point) for index, point in enumerate(points)
    ]
    return ConvergenceReport(
        kind="wm",
        config_hash=config_hash(config),
        seed=config.seed,
        case=None if config.theorem is None else config.theorem.value,
        H=config.spectrum.H,
        points=results,
        physical={} if config.physical is None else config.physical.derived(),
    )


# Liouville -------------------------------------------------------------------------


def _momentum_sums(ensemble: RayEnsemble) -> np.ndarray:
    """Weighted (Σw, Σwp, Σwp²) over the first tuple member and axis."""
    p = ensemble.momenta[:, 0, 0]
    w = ensemble.weights
    return np.array([w.sum(), np.sum(w * p), np.sum(w * p**2)])


def _variance(sums: np.ndarray) -> float:
    mass, first, second = sums
    mean = first / mass
    return float(second / mass - mean**2)


def momentum_variance_law(model: WhiteNoiseModel, initial: float, z: float) -> float:
    """Var_p(0) + k̃² D(0) z for a homogeneous medium."""
    d0 = model.diffusion_origin() if model.spectrum.amplitude > 0 else 0.0
    return initial + model.ktilde**2 * d0 * z


def liouville_phase_grid(
    config: ExperimentConfig, model: WhiteNoiseModel, gamma: float
) -> PhaseSpaceGrid:
    """Phase-space grid wide enough in p for the diffused ray density."""
    var_p = momentum_variance_law(model, config.rays.covariance[1], config.z)
    if not model.background.is_homogeneous:
        var_p *= max(model.background.mu_bound, 1.0) ** 2
    spread = 2 * PHASE_SPREAD * math.sqrt(var_p) + 2 * abs(config.rays.mean[1])
    return PhaseSpaceGrid(
        points=config.grid.points,
        dx=config.grid.dx,
        dp=spread / config.grid.points,
        gamma=gamma,
    )


def liouville_reference(
    config: ExperimentConfig, model: WhiteNoiseModel, phase: PhaseSpaceGrid
) -> MomentField:
    initial = gaussian_density(phase, config.rays.mean, config.rays.covariance)
    if model.background.is_homogeneous:
        return solve_mean_liouville(initial, model, config.z)
    return solve_mean_inhomogeneous(initial, model, config.z, nsteps=config.rays.nsteps)


def _liouville_point(
    config: ExperimentConfig, settings: Settings, index: int, point: SchedulePoint
) -> ConvergencePoint:
    start = time.perf_counter()
    grid = _point_grid(config, point)
    spectrum = _point_spectrum(config, point)
    model = WhiteNoiseModel(
        regime=Regime.LIOUVILLE,
        spectrum=spectrum,
        ktilde=grid.ktilde,
        background=config.background,
    )
    count = config.ensemble_size
    offset = index * count
    per_realization = math.ceil(config.rays.count / count)
    nz = slices_needed(config, grid)
    dz = ray_step_bound(config, grid, point)

    def run(chunk_index: int, indices: Sequence[int]) -> list[RayEnsemble]:
        traced = []
        for r in indices:
            rays = gaussian_rays(
                per_realization,
                config.seed,
                mean=config.rays.mean,
                covariance=config.rays.covariance,
                index=offset + r,
            )
            realization = synthesize_volume(
                spectrum,
                grid,
                nz,
                config.seed,
                dz_field=_dz_field(config, grid),
                index=offset + r,
                truncate_infrared=config.truncate_infrared,
            )
            dz_run = min(dz, ray_step_limit(realization))
            traced.append(
                trace_rays_medium(
                    rays,
                    realization,
                    config.background,
                    config.z,
                    dz_run,
                    grid.ktilde,
                )
            )
        return traced

    chunks = map_chunks(run, range(count), settings.chunk_size, settings.threads)
    ensembles = [ensemble for chunk in chunks for ensemble in chunk]
    sums = np.stack([_momentum_sums(ensemble) for ensemble in ensembles])
    counts = np.ones(len(ensembles))
    empirical = _variance(sums.sum(axis=0))
    if model.background.is_homogeneous:
        prediction = momentum_variance_law(model, config.rays.covariance[1], config.z)
        prediction_error = 0.0
    else:
        reference_rays = gaussian_rays(
            config.rays.count,
            config.seed,
            mean=config.rays.mean,
            covariance=config.rays.covariance,
            index=offset + count,
        )
        sde = trace_rays_sde(
            reference_rays,
            model,
            config.z,
            config.z / config.rays.nsteps,
            config.seed,
            chunk_size=config.rays.chunk_size,
            threads=settings.threads,
        )
        prediction = _variance(_momentum_sums(sde))
        prediction_error = 0.0
    error = abs(empirical - prediction) / prediction if prediction else abs(empirical)
    standard_error = _chunk_jackknife(
        sums,
        counts,
        lambda pooled: abs(_variance(pooled) - prediction) / (prediction or 1.0),
    )
    comparisons = [
        ProbeComparison(
            label="Var_p",
            empirical=empirical,
            empirical_error=_chunk_jackknife(sums, counts, _variance),
            prediction=prediction,
            prediction_error=prediction_error,
        )
    ]
    if config.density_probes and Observable.MEAN in config.observables:
        pooled = concatenate(ensembles)
        comparisons.extend(_density_comparisons(config, model, point, pooled))
    logger.info(
        "Schedule point done",
        index=index,
        epsilon=point.epsilon,
        variance=empirical,
        prediction=prediction,
        error=error,
    )
    return ConvergencePoint(
        index=index,
        epsilon=point.epsilon,
        gamma=point.gamma,
        eta=point.eta,
        rho=point.rho,
        metric=schedule_metric(point, spectrum.H),
        empirical=empirical,
        prediction=prediction,
        error=error,
        standard_error=standard_error,
        realizations=count,
        seed=config.seed,
        first_stream=offset,
        probes=comparisons,
        wall_clock=time.perf_counter() - start,
    )


def _density_comparisons(
    config: ExperimentConfig,
    model: WhiteNoiseModel,
    point: SchedulePoint,
    ensemble: RayEnsemble,
) -> list[ProbeComparison]:
    """Kernel density of the traced rays against the smoothed kinetic solution."""
    phase = liouville_phase_grid(config, model, point.gamma)
    bandwidth = config.rays.bandwidth or (2 * phase.dx, 2 * phase.dp)
    reference = liouville_reference(config, model, phase)
    points = np.asarray(config.density_probes, dtype=float)
    predicted = smoothed_probes(reference.as_wigner(), points, bandwidth)
    weights = ensemble.weights / ensemble.total_weight
    normalized = RayEnsemble(
        positions=ensemble.positions,
        momenta=ensemble.momenta,
        weights=weights,
        seed=ensemble.seed,
        z=ensemble.z,
    )
    estimate = estimate_phase_space_density(
        normalized, probes=points[:, None, :], bandwidth=bandwidth
    )
    assert estimate.estimates is not None and estimate.standard_errors is not None
    return [
        ProbeComparison(
            label=f"F({x:g},{p:g})",
            empirical=float(estimate.estimates[k]),
            empirical_error=float(estimate.standard_errors[k]),
            prediction=float(predicted[k]),
        )
        for k, (x, p) in enumerate(points)
    ]


def run_convergence_liouville(
    config: ExperimentConfig, settings: Optional[Settings] = None
) -> ConvergenceReport:
    """Rays through resolved media against the kinetic momentum-diffusion law."""
    settings = settings or Settings()
    if config.regime != Regime.LIOUVILLE:
        raise RegimeViolation("liouville regime", f"config is {config.regime.value}")
    points = config.schedule_points()
    check_resources(config, settings)
    logger.info("Liouville convergence run", points=len(points), seed=config.seed)
    results = [
        _liouville_point(config, settings, index, point)
        for index, point in enumerate(points)
    ]
    return ConvergenceReport(
        kind="liouville",
        config_hash=config_hash(config),
        seed=config.seed,
        case=None if config.theorem is None else config.theorem.value,
        H=config.spectrum.H,
        points=results,
        physical={} if config.physical is None else config.physical.derived(),
    )

