"""
Convergence report aggregation: plot-ready CSV tables, a JSON manifest and a
human-readable summary rendered from a jinja2 template.

Every artifact except ``timings.json`` is a pure function of the reports, so a
re-run with the same configuration and seed reproduces the files byte for byte.
"""
import csv
import io
import json
import math
import os
from dataclasses import asdict
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version
from pathlib import Path
from typing import Any
from typing import Optional
from typing import Sequence

import structlog
from jinja2 import Environment
from jinja2 import FileSystemLoader
from jinja2 import Template

from .config import Settings
from .exceptions import ContainerError
from .harness import ConvergencePoint
from .harness import ConvergenceReport
from .harness import ProbeComparison

logger = structlog.get_logger()

CONVERGENCE_COLUMNS = (
    "kind",
    "config_hash",
    "seed",
    "case",
    "point",
    "epsilon",
    "gamma",
    "eta",
    "rho",
    "H",
    "metric",
    "empirical",
    "prediction",
    "error",
    "standard_error",
    "realizations",
    "first_stream",
)
PROBE_COLUMNS = (
    "config_hash",
    "point",
    "label",
    "empirical",
    "empirical_error",
    "prediction",
    "prediction_error",
    "z_score",
)
VERSIONED_PACKAGES = ("turbwig", "numpy", "scipy", "pydantic", "structlog")


def load_template(filename: str) -> Template:
    templates_folder = os.path.join(os.path.dirname(__file__), "templates")
    file_loader = FileSystemLoader(templates_folder)
    env = Environment(loader=file_loader, keep_trailing_newline=True)
    template = env.get_template(filename)

    return template


def format_float(value: float) -> str:
    """Fixed-width scientific notation; ``nan``/``inf``/``-inf`` spelled out."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.12e}"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def render_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


def convergence_rows(reports: Sequence[ConvergenceReport]) -> list[list[Any]]:
    return [
        [
            report.kind,
            report.config_hash,
            report.seed,
            report.case,
            point.index,
            point.epsilon,
            point.gamma,
            point.eta,
            point.rho,
            report.H,
            point.metric,
            point.empirical,
            point.prediction,
            point.error,
            point.standard_error,
            point.realizations,
            point.first_stream,
        ]
        for report in reports
        for point in report.points
    ]


def probe_rows(reports: Sequence[ConvergenceReport]) -> list[list[Any]]:
    return [
        [
            report.config_hash,
            point.index,
            probe.label,
            probe.empirical,
            probe.empirical_error,
            probe.prediction,
            probe.prediction_error,
            probe.z_score,
        ]
        for report in reports
        for point in report.points
        for probe in point.probes
    ]


def package_versions() -> dict[str, str]:
    versions = {}
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def build_manifest(reports: Sequence[ConvergenceReport]) -> dict[str, Any]:
    return {
        "schema_version": 1,
        "runs": [
            {
                "kind": report.kind,
                "config_hash": report.config_hash,
                "seed": report.seed,
                "case": report.case,
                "H": report.H,
                "points": [
                    {
                        "index": point.index,
                        "seed": point.seed,
                        "first_stream": point.first_stream,
                        "realizations": point.realizations,
                    }
                    for point in report.points
                ],
                "physical": dict(sorted(report.physical.items())),
            }
            for report in reports
        ],
        "versions": package_versions(),
    }


def _summary_context(reports: Sequence[ConvergenceReport]) -> dict[str, Any]:
    return {
        "runs": [
            {
                "kind": report.kind,
                "config_hash": report.config_hash,
                "seed": report.seed,
                "case": report.case or "-",
                "H": format_float(report.H),
                "decreasing": report.decreasing() if len(report.points) > 1 else None,
                "points": [
                    {
                        "index": point.index,
                        "epsilon": format_float(point.epsilon),
                        "metric": format_float(point.metric),
                        "error": format_float(point.error),
                        "standard_error": format_float(point.standard_error),
                        "realizations": point.realizations,
                    }
                    for point in report.points
                ],
                "probes": sum(len(point.probes) for point in report.points),
            }
            for report in reports
        ],
        "columns": CONVERGENCE_COLUMNS,
    }


@dataclass(frozen=True)
class ReportOutput:
    summary: str
    convergence_csv: str
    probes_csv: str
    manifest: dict[str, Any]
    timings: dict[str, list[float]]


def report(reports: Sequence[ConvergenceReport]) -> ReportOutput:
    """Aggregate convergence reports into summary, CSV tables and manifest."""
    summary = load_template("summary.txt.j2").render(**_summary_context(reports))
    return ReportOutput(
        summary=summary,
        convergence_csv=render_csv(CONVERGENCE_COLUMNS, convergence_rows(reports)),
        probes_csv=render_csv(PROBE_COLUMNS, probe_rows(reports)),
        manifest=build_manifest(reports),
        timings={
            run.config_hash: [point.wall_clock for point in run.points]
            for run in reports
        },
    )


def _json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


class ReportWriter:
    """Writes report artifacts below ``directory``.

    With ``settings.dry_run`` the artifacts are logged and nothing is written.
    """

    def __init__(self, settings: Settings, directory: Optional[Path] = None):
        self.directory = Path(directory or settings.output_dir)
        self.dry_run = settings.dry_run

    def write(self, output: ReportOutput) -> dict[str, Path]:
        artifacts = {
            "summary.txt": output.summary,
            "convergence.csv": output.convergence_csv,
            "probes.csv": output.probes_csv,
            "manifest.json": _json(output.manifest),
            "timings.json": _json(output.timings),
        }
        paths = {name: self.directory / name for name in artifacts}
        if self.dry_run:
            logger.info("Report summary", summary=output.summary)
            logger.info("This was a dry run. No report was written")
            return paths
        self.directory.mkdir(parents=True, exist_ok=True)
        for name, text in artifacts.items():
            # newline="" keeps the CRLF row terminators of the CSV tables
            with open(paths[name], "w", encoding="utf-8", newline="") as stream:
                stream.write(text)
        logger.info("Wrote report", directory=str(self.directory), files=len(paths))
        return paths


# Serialized convergence reports --------------------------------------------------


def dump_report(report: ConvergenceReport, path: Path) -> Path:
    """Persist a report without its wall-clock timings, which go to timings.json."""
    data = asdict(report)
    for point in data["points"]:
        point.pop("wall_clock")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_json(data), encoding="utf-8")
    return path


def load_report(path: Path) -> ConvergenceReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        points = [
            ConvergencePoint(
                **{
                    **point,
                    "probes": [ProbeComparison(**probe) for probe in point["probes"]],
                }
            )
            for point in data.pop("points")
        ]
        return ConvergenceReport(**data, points=points)
    except (KeyError, TypeError, json.JSONDecodeError) as error:
        raise ContainerError(f"{path} is not a convergence report: {error}") from error
