"""
Command-line entry point: ``turbwig <subcommand> --config FILE``.
"""
import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable
from typing import Optional
from typing import Sequence

import numpy as np
import structlog
from pydantic import ValidationError

from .beam import ComplexBeam
from .beam import gaussian_beam
from .beam import l2_norm
from .beam import split_step_propagate
from .beam import white_noise_propagate
from .config import ExperimentConfig
from .config import Settings
from .config import config_hash
from .config import load_config
from .container import ContainerLoader
from .container import save_beam
from .container import save_moment_field
from .container import save_ray_ensemble
from .container import save_realization
from .container import save_screens
from .container import save_wigner
from .exceptions import TurbwigError
from .harness import ConvergenceReport
from .harness import liouville_phase_grid
from .harness import liouville_reference
from .harness import run_convergence_liouville
from .harness import run_convergence_wm
from .harness import slices_needed
from .kinetic import solve_npoint_liouville
from .medium import synthesize_screens
from .medium import synthesize_volume
from .moments import MomentField
from .moments import Regime
from .moments import WhiteNoiseModel
from .moments import evaluate_at
from .moments import solve_mean_wm
from .rays import estimate_phase_space_density
from .rays import gaussian_rays
from .rays import ray_step_limit
from .rays import trace_rays_medium
from .rays import trace_rays_sde
from .report import ReportWriter
from .report import dump_report
from .report import load_report
from .report import render_csv
from .report import report
from .spectra import diffusion_origin
from .spectra import eval_spectrum
from .spectra import structure_function
from .spectra import total_variance
from .spectra import transverse_marginal
from .wigner import PhaseSpaceGrid
from .wigner import gaussian_density
from .wigner import wigner_transform

logger = structlog.get_logger()

EXIT_FAILURE = 2
SPECTRUM_SAMPLES = 200
HISTOGRAM_BINS = 64


@dataclass(frozen=True)
class Invocation:
    config: Optional[ExperimentConfig]
    settings: Settings
    output_dir: Path
    inputs: list[Path]

    @property
    def experiment(self) -> ExperimentConfig:
        if self.config is None:
            raise TurbwigError("this subcommand needs --config")
        return self.config

    @property
    def model_hash(self) -> str:
        return config_hash(self.experiment)


Handler = Callable[[Invocation], None]


class CommandRouter:
    def __init__(self) -> None:
        self.registry: dict[str, Handler] = {}

    def register(self, name: str) -> Callable[[Handler], Handler]:
        def decorator(handler: Handler) -> Handler:
            self.registry[name] = handler
            return handler

        return decorator


router = CommandRouter()


def _write_csv(path: Path, header: Sequence[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as stream:
        stream.write(render_csv(header, rows))
    logger.info("Wrote table", path=str(path), rows=len(rows))
    return path


def _wm_model(config: ExperimentConfig) -> WhiteNoiseModel:
    return WhiteNoiseModel(
        regime=Regime.WIGNER_MOYAL,
        spectrum=config.spectrum,
        gamma=config.grid.gamma,
        ktilde=config.grid.ktilde,
        background=config.background,
    )


def _liouville_model(config: ExperimentConfig) -> WhiteNoiseModel:
    return WhiteNoiseModel(
        regime=Regime.LIOUVILLE,
        spectrum=config.spectrum,
        ktilde=config.grid.ktilde,
        background=config.background,
    )


def _initial_beam(config: ExperimentConfig) -> ComplexBeam:
    return gaussian_beam(
        config.grid,
        width=config.beam.width,
        centre=config.beam.centre,
        momentum=config.beam.momentum,
        chirp=config.beam.chirp,
    )


def _probe_table(path: Path, field: MomentField, config: ExperimentConfig) -> None:
    if not config.density_probes:
        return
    points = np.asarray(config.density_probes, dtype=float)
    values = evaluate_at(field.as_wigner(), points)
    rows = [[float(x), float(p), float(v)] for (x, p), v in zip(points, values)]
    _write_csv(path, ("x", "p", "value"), rows)


@router.register("spectra")
def tabulate_spectra(invocation: Invocation) -> None:
    """Tabulate Φ, its transverse marginal and the structure function."""
    config = invocation.experiment
    model = config.spectrum
    k = np.geomspace(1e-3, config.grid.q_nyquist, SPECTRUM_SAMPLES)
    kvec = np.zeros((k.size, model.dim + 1))
    kvec[:, 1] = k
    density = eval_spectrum(model, kvec)
    marginal = transverse_marginal(model, k)
    _write_csv(
        invocation.output_dir / "spectrum.csv",
        ("k", "phi", "phi_transverse"),
        [[float(a), float(b), float(c)] for a, b, c in zip(k, density, marginal)],
    )
    r = config.grid.dx * np.arange(1, config.grid.points // 2)
    _write_csv(
        invocation.output_dir / "structure.csv",
        ("r", "structure_function"),
        [[float(value), structure_function(model, float(value))] for value in r],
    )
    if model.eta > 0:
        logger.info("Spectrum variance", variance=total_variance(model))
    try:
        logger.info("Diffusion at the origin", d0=diffusion_origin(model).tolist())
    except TurbwigError as error:
        logger.info("No finite diffusion tensor", reason=str(error))


@router.register("medium")
def synthesize_medium(invocation: Invocation) -> None:
    """One resolved realization, or one white-noise screen stack."""
    config = invocation.experiment
    grid = config.grid
    if config.medium == "screens":
        screens = synthesize_screens(
            config.spectrum,
            grid,
            config.nsteps,
            config.z / config.nsteps,
            config.seed,
            truncate_infrared=config.truncate_infrared,
        )
        path = invocation.output_dir / "screens.twig"
        save_screens(path, screens, invocation.model_hash)
        return
    realization = synthesize_volume(
        config.spectrum,
        grid,
        slices_needed(config, grid),
        config.seed,
        dz_field=config.dz_field,
        truncate_infrared=config.truncate_infrared,
    )
    logger.info(
        "Synthesized medium",
        shape=realization.values.shape,
        variance=float(np.var(realization.values)),
    )
    save_realization(
        invocation.output_dir / "realization.twig", realization, invocation.model_hash
    )


@router.register("beam")
def propagate_beam(invocation: Invocation) -> None:
    """Propagate the configured Gaussian beam through one medium realization."""
    config = invocation.experiment
    grid = config.grid
    beam = _initial_beam(config)
    dz = config.z / config.nsteps
    if config.medium == "screens":
        screens = synthesize_screens(
            config.spectrum,
            grid,
            config.nsteps,
            dz,
            config.seed,
            truncate_infrared=config.truncate_infrared,
        )
        result = white_noise_propagate(beam, screens, config.background)
    else:
        realization = synthesize_volume(
            config.spectrum,
            grid,
            slices_needed(config, grid),
            config.seed,
            dz_field=config.dz_field,
            truncate_infrared=config.truncate_infrared,
        )
        result = split_step_propagate(
            beam, realization, config.background, dz, config.nsteps
        )
    logger.info("Propagated beam", z=result.z, norm=l2_norm(result))
    save_beam(
        invocation.output_dir / "beam.twig", result, invocation.model_hash, config.seed
    )


@router.register("wigner")
def transform_beam(invocation: Invocation) -> None:
    """Wigner transform of a stored beam snapshot."""
    loader = ContainerLoader(invocation.model_hash)
    sources = invocation.inputs or [invocation.output_dir / "beam.twig"]
    for source in sources:
        beam = loader.load_beam(source)
        wigner = wigner_transform(beam)
        logger.info(
            "Wigner transform",
            source=str(source),
            mass=wigner.mass,
            imaginary_residue=wigner.imaginary_residue,
        )
        save_wigner(
            invocation.output_dir / f"{source.stem}.wigner.twig",
            wigner,
            invocation.model_hash,
        )


def density_bandwidth(config: ExperimentConfig) -> tuple[float, float]:
    """Kernel bandwidth of the ray density, two phase-space cells by default."""
    if config.rays.bandwidth is not None:
        return config.rays.bandwidth
    if config.rays.mode == "sde":
        model = _liouville_model(config)
        phase = liouville_phase_grid(config, model, config.grid.gamma)
    else:
        phase = PhaseSpaceGrid.for_grid(config.grid)
    return 2 * phase.dx, 2 * phase.dp


@router.register("rays")
def trace_rays(invocation: Invocation) -> None:
    """Rays through one resolved realization or by the white-noise SDE."""
    config = invocation.experiment
    settings = invocation.settings
    grid = config.grid
    ensemble = gaussian_rays(
        config.rays.count,
        config.seed,
        mean=config.rays.mean,
        covariance=config.rays.covariance,
    )
    if config.rays.mode == "medium":
        realization = synthesize_volume(
            config.spectrum,
            grid,
            slices_needed(config, grid),
            config.seed,
            dz_field=config.dz_field,
            truncate_infrared=config.truncate_infrared,
        )
        dz = min(config.z / config.rays.nsteps, ray_step_limit(realization))
        traced = trace_rays_medium(
            ensemble, realization, config.background, config.z, dz, grid.ktilde
        )
    else:
        traced = trace_rays_sde(
            ensemble,
            _liouville_model(config),
            config.z,
            config.z / config.rays.nsteps,
            config.seed,
            chunk_size=config.rays.chunk_size,
            threads=settings.threads,
        )
    path = invocation.output_dir / "rays.twig"
    save_ray_ensemble(path, traced, invocation.model_hash)
    if config.rays.trajectories:
        rows = [
            [float(traced.positions[m, 0, 0]), float(traced.momenta[m, 0, 0])]
            for m in range(traced.count)
        ]
        _write_csv(invocation.output_dir / "rays.csv", ("x", "p"), rows)
    if config.density_probes:
        probes = np.asarray(config.density_probes, dtype=float)[:, None, :]
        density = estimate_phase_space_density(
            traced, probes=probes, bandwidth=density_bandwidth(config)
        )
    else:
        momenta = traced.momenta[:, 0, 0]
        half = grid.length / 2
        low, high = float(momenta.min()), float(momenta.max())
        if high - low < grid.dx:
            low, high = low - grid.dx, high + grid.dx
        bins = (
            np.linspace(-half, half, HISTOGRAM_BINS + 1),
            np.linspace(low, high, HISTOGRAM_BINS + 1),
        )
        density = estimate_phase_space_density(traced, bins=bins)
    save_moment_field(
        invocation.output_dir / "rays.density.twig",
        density,
        invocation.model_hash,
        config.seed,
    )


@router.register("mean-wm")
def mean_wm(invocation: Invocation) -> None:
    config = invocation.experiment
    initial = wigner_transform(_initial_beam(config))
    field = solve_mean_wm(initial, _wm_model(config), config.z)
    path = invocation.output_dir / "mean_wm.twig"
    save_moment_field(path, field, invocation.model_hash)
    _probe_table(invocation.output_dir / "mean_wm.csv", field, config)


@router.register("mean-liouville")
def mean_liouville(invocation: Invocation) -> None:
    config = invocation.experiment
    model = _liouville_model(config)
    phase = liouville_phase_grid(config, model, config.grid.gamma)
    field = liouville_reference(config, model, phase)
    save_moment_field(
        invocation.output_dir / "mean_liouville.twig", field, invocation.model_hash
    )
    _probe_table(invocation.output_dir / "mean_liouville.csv", field, config)


@router.register("npoint")
def npoint(invocation: Invocation) -> None:
    """n-point correlations of the Liouville limit at the configured probes."""
    config = invocation.experiment
    settings = invocation.settings
    if not config.npoint.probes:
        raise TurbwigError("npoint needs at least one probe tuple")
    model = _liouville_model(config)
    phase = liouville_phase_grid(config, model, config.grid.gamma)
    initial = gaussian_density(phase, config.rays.mean, config.rays.covariance)
    probes = np.asarray(config.npoint.probes, dtype=float)
    grid_method = config.npoint.method == "grid"
    field = solve_npoint_liouville(
        initial,
        model,
        config.npoint.n,
        config.z,
        probes,
        method=config.npoint.method,
        bandwidth=config.rays.bandwidth,
        count=config.rays.count,
        nsteps=config.npoint.grid_nsteps if grid_method else config.rays.nsteps,
        seed=config.seed,
        threads=settings.threads,
        chunk_size=config.rays.chunk_size,
        max_memory_bytes=settings.max_memory_bytes,
    )
    save_moment_field(
        invocation.output_dir / "npoint.twig", field, invocation.model_hash, config.seed
    )
    assert field.estimates is not None and field.standard_errors is not None
    rows = [
        [index, float(estimate), float(error)]
        for index, (estimate, error) in enumerate(
            zip(field.estimates, field.standard_errors)
        )
    ]
    columns = ("probe", "estimate", "standard_error")
    _write_csv(invocation.output_dir / "npoint.csv", columns, rows)


def _finish_convergence(
    invocation: Invocation, result: ConvergenceReport, name: str
) -> None:
    dump_report(result, invocation.output_dir / f"{name}.report.json")
    ReportWriter(invocation.settings, invocation.output_dir).write(report([result]))
    logger.info(
        "Convergence run finished",
        kind=result.kind,
        errors=result.errors().tolist(),
        decreasing=result.decreasing(),
    )


@router.register("converge-wm")
def converge_wm(invocation: Invocation) -> None:
    result = run_convergence_wm(invocation.experiment, invocation.settings)
    _finish_convergence(invocation, result, "converge_wm")


@router.register("converge-liouville")
def converge_liouville(invocation: Invocation) -> None:
    result = run_convergence_liouville(invocation.experiment, invocation.settings)
    _finish_convergence(invocation, result, "converge_liouville")


@router.register("report")
def aggregate_reports(invocation: Invocation) -> None:
    """Aggregate stored convergence reports, by default every one in the output dir."""
    sources = invocation.inputs or sorted(invocation.output_dir.glob("*.report.json"))
    reports = [load_report(source) for source in sources]
    ReportWriter(invocation.settings, invocation.output_dir).write(report(reports))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turbwig", description="Beam waves in synthetic turbulence"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, handler in router.registry.items():
        subparser = subparsers.add_parser(name, help=(handler.__doc__ or "").strip())
        subparser.add_argument("--config", type=Path, help="YAML experiment file")
        subparser.add_argument("--seed", type=int, help="Override the config seed")
        subparser.add_argument("--out", type=Path, help="Output directory")
        subparser.add_argument("--threads", type=int, help="Worker threads")
        subparser.add_argument(
            "--input",
            type=Path,
            action="append",
            default=[],
            help="Input artifact (wigner, report); may be repeated",
        )
    return parser


def configure_logging(level: str) -> None:
    structlog.configure(
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(level.upper())
        )
    )


def _invocation(arguments: argparse.Namespace) -> Invocation:
    overrides = {} if arguments.threads is None else {"threads": arguments.threads}
    settings = Settings(**overrides)
    config = None
    if arguments.config is not None:
        config = load_config(arguments.config).with_overrides(
            seed=arguments.seed, output_dir=arguments.out
        )
    output_dir = arguments.out or (config and config.output_dir) or settings.output_dir
    return Invocation(
        config=config,
        settings=settings,
        output_dir=Path(output_dir),
        inputs=list(arguments.input),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    arguments = build_parser().parse_args(argv)
    try:
        invocation = _invocation(arguments)
        configure_logging(invocation.settings.log_level)
        logger.info("Running subcommand", command=arguments.command)
        router.registry[arguments.command](invocation)
    except (TurbwigError, ValidationError, ValueError, OSError) as error:
        logger.error("Subcommand failed", command=arguments.command, error=str(error))
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
