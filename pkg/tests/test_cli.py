# -*- coding: utf-8 -*-
import math
from collections.abc import Iterator
from pathlib import Path

import pytest
import structlog
from structlog.testing import capture_logs

from turbwig.cli import EXIT_FAILURE
from turbwig.cli import build_parser
from turbwig.cli import density_bandwidth
from turbwig.cli import main
from turbwig.cli import router
from turbwig.config import load_config
from turbwig.harness import liouville_phase_grid
from turbwig.moments import Regime
from turbwig.moments import WhiteNoiseModel

CONFIG = """\
schema_version: 1
regime: wigner_moyal
medium: screens
spectrum:
  H: 0.3333333333333333
  eta: 1.0
  amplitude: 0.05
grid:
  points: 64
  length: 16.0
z: 0.1
nsteps: 20
seed: 1
"""

NPOINT_CONFIG = """\
schema_version: 1
regime: liouville
spectrum:
  H: 0.3333333333333333
  eta: 1.0
  rho: 4.0
  amplitude: 0.05
grid:
  points: 256
  length: 32.0
z: 0.5
npoint:
  n: 2
  method: grid
  probes:
    - [[0.0, 0.0], [0.0, 0.0]]
"""


@pytest.fixture(autouse=True)
def reset_logging() -> Iterator[None]:
    yield
    structlog.reset_defaults()


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "experiment.yaml"
    path.write_text(CONFIG, encoding="utf-8")
    return path


def test_subcommands() -> None:
    """Test that every subcommand is registered with the parser"""
    assert set(router.registry) == {
        "spectra",
        "medium",
        "beam",
        "wigner",
        "rays",
        "mean-wm",
        "mean-liouville",
        "npoint",
        "converge-wm",
        "converge-liouville",
        "report",
    }
    arguments = build_parser().parse_args(["beam", "--config", "x.yaml", "--seed", "3"])
    assert arguments.command == "beam"
    assert arguments.seed == 3


def test_invalid_config_exits_with_failure(tmp_path: Path) -> None:
    """Test the exit status for an unsupported configuration"""
    path = tmp_path / "bad.yaml"
    path.write_text(CONFIG.replace("schema_version: 1", "schema_version: 3"))
    arguments = ["--config", str(path), "--out", str(tmp_path)]
    assert main(["spectra", *arguments]) == EXIT_FAILURE
    assert main(["spectra", "--out", str(tmp_path)]) == EXIT_FAILURE


def test_spectra_tables(tmp_path: Path, config_file: Path) -> None:
    """Test that the spectra subcommand writes its CSV tables"""
    assert main(["spectra", "--config", str(config_file), "--out", str(tmp_path)]) == 0
    spectrum = (tmp_path / "spectrum.csv").read_bytes()
    assert spectrum.startswith(b"k,phi,phi_transverse\r\n")
    assert spectrum.count(b"\r\n") == 201
    assert (tmp_path / "structure.csv").exists()


def test_beam_then_wigner(tmp_path: Path, config_file: Path) -> None:
    """Test that stored beams are only read back under the same configuration"""
    arguments = ["--config", str(config_file), "--out", str(tmp_path)]
    assert main(["beam", *arguments]) == 0
    assert (tmp_path / "beam.twig").exists()
    assert main(["wigner", *arguments]) == 0
    assert (tmp_path / "beam.wigner.twig").exists()
    assert main(["wigner", *arguments, "--seed", "2"]) == EXIT_FAILURE


def test_mean_wm_probe_table(tmp_path: Path, config_file: Path) -> None:
    """Test the probe table of the mean Wigner-Moyal solution"""
    config_file.write_text(CONFIG + "density_probes:\n  - [0.0, 0.0]\n  - [1.0, 0.5]\n")
    assert main(["mean-wm", "--config", str(config_file), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "mean_wm.csv").read_text().splitlines()
    assert rows[0] == "x,p,value"
    assert len(rows) == 3
    assert (tmp_path / "mean_wm.twig").exists()


def test_screens_with_truncated_infrared(tmp_path: Path) -> None:
    """Test white-noise screens for a spectrum with no outer scale"""
    path = tmp_path / "screens.yaml"
    text = CONFIG.replace("eta: 1.0", "eta: 0.0")
    path.write_text(text + "truncate_infrared: true\n", encoding="utf-8")
    assert main(["beam", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "beam.twig").exists()


def test_density_bandwidth(tmp_path: Path) -> None:
    """Test that the default density bandwidth spans two cells in x and in p"""
    path = tmp_path / "rays.yaml"
    path.write_text(CONFIG + "rays:\n  mode: medium\n", encoding="utf-8")
    width_x, width_p = density_bandwidth(load_config(path))
    assert width_x == pytest.approx(0.5)
    assert width_p == pytest.approx(2 * math.pi / 16)
    path.write_text(NPOINT_CONFIG, encoding="utf-8")
    config = load_config(path)
    model = WhiteNoiseModel(
        regime=Regime.LIOUVILLE,
        spectrum=config.spectrum,
        ktilde=config.grid.ktilde,
        background=config.background,
    )
    phase = liouville_phase_grid(config, model, config.grid.gamma)
    assert density_bandwidth(config) == (2 * phase.dx, 2 * phase.dp)
    assert phase.dp != phase.dx
    path.write_text(NPOINT_CONFIG + "rays:\n  bandwidth: [0.3, 0.4]\n")
    assert density_bandwidth(load_config(path)) == (0.3, 0.4)


def test_npoint_grid_memory_ceiling(tmp_path: Path) -> None:
    """Test that a four-dimensional grid solve beyond the memory ceiling fails"""
    path = tmp_path / "npoint.yaml"
    path.write_text(NPOINT_CONFIG, encoding="utf-8")
    with capture_logs() as cap_logs:
        status = main(["npoint", "--config", str(path), "--out", str(tmp_path)])
    assert status == EXIT_FAILURE
    failures = [log for log in cap_logs if log["event"] == "Subcommand failed"]
    assert "exceeds the configured ceiling" in failures[0]["error"]
    assert not (tmp_path / "npoint.twig").exists()


def test_converge_and_report(tmp_path: Path, config_file: Path) -> None:
    """Test a convergence run followed by aggregation of its stored report"""
    config_file.write_text(CONFIG + "ensemble_size: 2\n")
    arguments = ["--config", str(config_file), "--out", str(tmp_path)]
    assert main(["converge-wm", *arguments]) == 0
    assert (tmp_path / "converge_wm.report.json").exists()
    first = (tmp_path / "convergence.csv").read_bytes()
    (tmp_path / "convergence.csv").unlink()
    assert main(["report", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "convergence.csv").read_bytes() == first
    assert (tmp_path / "manifest.json").exists()
