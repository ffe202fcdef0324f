# -*- coding: utf-8 -*-
import os
from collections.abc import Iterator
from typing import Any

import pytest

from turbwig.beam import ComplexBeam
from turbwig.beam import gaussian_beam
from turbwig.grid import SimGrid
from turbwig.moments import Regime
from turbwig.moments import WhiteNoiseModel
from turbwig.spectra import SpectrumModel
from turbwig.wigner import PhaseSpaceGrid


@pytest.fixture(scope="module")
def settings_overrides() -> Iterator[dict[str, Any]]:
    """Fixture to construct dictionary of minimal overrides for valid settings.

    Yields:
        Minimal set of overrides.
    """
    overrides = {
        "TURBWIG_THREADS": "1",
        "TURBWIG_CHUNK_SIZE": "4",
        "TURBWIG_DRY_RUN": "True",
    }
    yield overrides


@pytest.fixture(scope="module")
def load_settings_overrides(
    settings_overrides: dict[str, Any]
) -> Iterator[dict[str, Any]]:
    """Fixture to set happy-path settings overrides as environmental variables.

    Note:
        Only loads environmental variables, if variables are not already set.

    Args:
        settings_overrides: The list of settings to load in.

    Yields:
        Minimal set of overrides.
    """
    monkeypatch = pytest.MonkeyPatch()
    for key, value in settings_overrides.items():
        if os.environ.get(key) is None:
            monkeypatch.setenv(key, value)
    yield settings_overrides
    monkeypatch.undo()


@pytest.fixture
def grid() -> SimGrid:
    return SimGrid(points=256, length=32.0)


@pytest.fixture
def von_karman() -> SpectrumModel:
    return SpectrumModel(H=1 / 3, eta=1.0)


@pytest.fixture
def smooth_spectrum() -> SpectrumModel:
    """Weak von Karman medium with a finite inner scale, D(0) close to 0.2."""
    return SpectrumModel(H=1 / 3, eta=1.0, rho=4.0, amplitude=0.05)


@pytest.fixture
def liouville_model(smooth_spectrum: SpectrumModel) -> WhiteNoiseModel:
    return WhiteNoiseModel(regime=Regime.LIOUVILLE, spectrum=smooth_spectrum, gamma=1.0)


@pytest.fixture
def beam(grid: SimGrid) -> ComplexBeam:
    return gaussian_beam(grid, width=1.0)


@pytest.fixture
def phase() -> PhaseSpaceGrid:
    return PhaseSpaceGrid(points=128, dx=0.125, dp=0.1, gamma=1.0)
