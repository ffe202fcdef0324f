# -*- coding: utf-8 -*-
import json
import math
from pathlib import Path
from typing import Any

import pytest
from structlog.testing import capture_logs

from turbwig.config import Settings
from turbwig.exceptions import ContainerError
from turbwig.harness import ConvergencePoint
from turbwig.harness import ConvergenceReport
from turbwig.harness import ProbeComparison
from turbwig.report import CONVERGENCE_COLUMNS
from turbwig.report import PROBE_COLUMNS
from turbwig.report import ReportWriter
from turbwig.report import dump_report
from turbwig.report import format_float
from turbwig.report import load_report
from turbwig.report import report


def make_point(index: int, error: float, standard_error: float) -> ConvergencePoint:
    return ConvergencePoint(
        index=index,
        epsilon=0.1 / (index + 1),
        gamma=1.0,
        eta=1.0,
        rho=math.inf,
        metric=0.1 / (index + 1),
        empirical=0.5,
        prediction=0.5,
        error=error,
        standard_error=standard_error,
        realizations=10,
        seed=3,
        first_stream=10 * index,
        probes=[
            ProbeComparison(
                label="W(0,0)W(1,0)",
                empirical=1.0,
                empirical_error=0.1,
                prediction=0.8,
                prediction_error=0.0,
            )
        ],
        wall_clock=1.5 + index,
    )


@pytest.fixture
def convergence() -> ConvergenceReport:
    return ConvergenceReport(
        kind="wm",
        config_hash="c" * 64,
        seed=3,
        case="1i",
        H=1 / 3,
        points=[make_point(0, 0.3, 0.01), make_point(1, 0.1, 0.01)],
        physical={"gamma": 10.0, "epsilon": 0.1},
    )


def test_empty_report_has_headers() -> None:
    """Test that no runs still yield valid tables"""
    output = report([])
    assert output.convergence_csv == ",".join(CONVERGENCE_COLUMNS) + "\r\n"
    assert output.probes_csv == ",".join(PROBE_COLUMNS) + "\r\n"
    assert output.manifest["runs"] == []
    assert "runs: 0" in output.summary


def test_tables(convergence: ConvergenceReport) -> None:
    """Test the rows, float format and line endings of the tables"""
    output = report([convergence])
    rows = output.convergence_csv.split("\r\n")
    assert len(rows) == 4 and rows[-1] == ""
    cells = rows[1].split(",")
    assert cells[CONVERGENCE_COLUMNS.index("rho")] == "inf"
    assert cells[CONVERGENCE_COLUMNS.index("error")] == format_float(0.3)
    assert format_float(0.3) == "3.000000000000e-01"
    probe = output.probes_csv.split("\r\n")[1].split(",")
    assert probe[PROBE_COLUMNS.index("z_score")] == format_float(2.0)
    assert output.timings == {"c" * 64: [1.5, 2.5]}
    assert "error decreasing beyond 1 sigma: yes" in output.summary


def test_report_is_reproducible(
    tmp_path: Path, convergence: ConvergenceReport
) -> None:
    """Test that writing the same report twice gives identical files"""
    settings = Settings(dry_run=False)
    first = ReportWriter(settings, tmp_path / "a").write(report([convergence]))
    second = ReportWriter(settings, tmp_path / "b").write(report([convergence]))
    for name in ("summary.txt", "convergence.csv", "probes.csv", "manifest.json"):
        assert first[name].read_bytes() == second[name].read_bytes()
    assert b"\r\n" in first["convergence.csv"].read_bytes()
    manifest = json.loads(first["manifest.json"].read_text())
    assert manifest["runs"][0]["points"][1]["first_stream"] == 10
    assert list(manifest["runs"][0]["physical"]) == ["epsilon", "gamma"]


def test_dry_run(
    tmp_path: Path,
    convergence: ConvergenceReport,
    load_settings_overrides: dict[str, Any],
) -> None:
    """Test that a dry run logs and writes nothing"""
    settings = Settings()
    with capture_logs() as cap_logs:
        paths = ReportWriter(settings, tmp_path / "dry").write(report([convergence]))
    events = [log["event"] for log in cap_logs]
    assert "This was a dry run. No report was written" in events
    assert not any(path.exists() for path in paths.values())


def test_report_round_trip(tmp_path: Path, convergence: ConvergenceReport) -> None:
    """Test that a dumped report loads back without its timings"""
    path = dump_report(convergence, tmp_path / "run.report.json")
    assert "wall_clock" not in path.read_text()
    loaded = load_report(path)
    assert loaded == convergence
    assert loaded.points[0].probes[0].label == "W(0,0)W(1,0)"
    (tmp_path / "broken.report.json").write_text("{}")
    with pytest.raises(ContainerError):
        load_report(tmp_path / "broken.report.json")
    (tmp_path / "garbage.report.json").write_text("not json")
    with pytest.raises(ContainerError):
        load_report(tmp_path / "garbage.report.json")
