"""Self-describing binary containers.

Layout: ``b"TWIG"``, a little-endian uint32 header length, a UTF-8 JSON header
and a little-endian float64 payload. Complex payloads are interleaved as
``(re, im)`` pairs along a trailing axis.
"""
import json
import struct
from pathlib import Path
from typing import Any
from typing import Optional

import numpy as np
import structlog

from .beam import ComplexBeam
from .exceptions import ContainerError
from .grid import SimGrid
from .medium import FieldRealization
from .medium import ScreenStack
from .moments import MomentField
from .rays import RayEnsemble
from .spectra import SpectrumModel
from .wigner import PhaseSpaceGrid
from .wigner import WignerGrid

logger = structlog.get_logger()

MAGIC = b"TWIG"
CONTAINER_VERSION = 1
_LENGTH = struct.Struct("<I")


def _payload(values: np.ndarray) -> tuple[bytes, bool]:
    values = np.asarray(values)
    if np.iscomplexobj(values):
        pairs = np.stack([values.real, values.imag], axis=-1)
        return np.ascontiguousarray(pairs, dtype="<f8").tobytes(), True
    return np.ascontiguousarray(values, dtype="<f8").tobytes(), False


def write_container(
    path: Path,
    kind: str,
    values: np.ndarray,
    model_hash: str,
    seed: Optional[int] = None,
    dims: Optional[list[str]] = None,
    spacings: Optional[list[float]] = None,
    metadata: Optional[dict[str, Any]] = None,
) -> Path:
    payload, is_complex = _payload(values)
    header = {
        "schema_version": CONTAINER_VERSION,
        "kind": kind,
        "shape": list(np.shape(values)),
        "complex": is_complex,
        "dims": dims or [],
        "spacings": spacings or [],
        "model_hash": model_hash,
        "seed": seed,
        "metadata": metadata or {},
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as stream:
        stream.write(MAGIC)
        stream.write(_LENGTH.pack(len(encoded)))
        stream.write(encoded)
        stream.write(payload)
    logger.debug("Wrote container", path=str(path), kind=kind, shape=header["shape"])
    return path


def read_container(path: Path) -> tuple[dict[str, Any], np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ContainerError(f"{path} is not a container (bad magic)")
    if len(data) < 8:
        raise ContainerError(f"{path} is truncated before the header")
    (length,) = _LENGTH.unpack(data[4:8])
    try:
        header = json.loads(data[8 : 8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as error:
        raise ContainerError(f"{path} has a malformed header: {error}") from error
    if header.get("schema_version") != CONTAINER_VERSION:
        raise ContainerError(
            f"{path} has container version {header.get('schema_version')}, "
            f"expected {CONTAINER_VERSION}"
        )
    shape = tuple(header["shape"])
    stored = shape + (2,) if header["complex"] else shape
    payload = data[8 + length :]
    expected = 8 * int(np.prod(stored, dtype=np.int64))
    if len(payload) != expected:
        raise ContainerError(
            f"{path} has {len(payload)} payload bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(stored).astype(float)
    if header["complex"]:
        values = values[..., 0] + 1j * values[..., 1]
    return header, values


# Typed writers ---------------------------------------------------------------


def _grid_metadata(grid: SimGrid) -> dict[str, Any]:
    return json.loads(grid.json())


def save_realization(
    path: Path, realization: FieldRealization, model_hash: str
) -> Path:
    grid = realization.grid
    return write_container(
        path,
        "realization",
        realization.values,
        model_hash,
        seed=realization.seed,
        dims=["z"] + [f"x{axis}" for axis in range(grid.dim)],
        spacings=[realization.dz_field] + [grid.dx] * grid.dim,
        metadata={
            "grid": _grid_metadata(grid),
            "spectrum": json.loads(realization.model.json()),
            "index": realization.index,
            "epsilon": realization.epsilon,
        },
    )


def save_screens(path: Path, screens: ScreenStack, model_hash: str) -> Path:
    grid = screens.grid
    return write_container(
        path,
        "screens",
        screens.screens,
        model_hash,
        seed=screens.seed,
        dims=["step"] + [f"x{axis}" for axis in range(grid.dim)],
        spacings=[screens.dz] + [grid.dx] * grid.dim,
        metadata={
            "grid": _grid_metadata(grid),
            "spectrum": json.loads(screens.model.json()),
            "index": screens.index,
        },
    )


def save_beam(
    path: Path, beam: ComplexBeam, model_hash: str, seed: Optional[int] = None
) -> Path:
    grid = beam.grid
    return write_container(
        path,
        "beam",
        beam.values,
        model_hash,
        seed=seed,
        dims=[f"x{axis}" for axis in range(grid.dim)],
        spacings=[grid.dx] * grid.dim,
        metadata={"grid": _grid_metadata(grid), "z": beam.z},
    )


def _phase_metadata(phase: PhaseSpaceGrid) -> dict[str, Any]:
    return json.loads(phase.json())


def save_wigner(
    path: Path, wigner: WignerGrid, model_hash: str, seed: Optional[int] = None
) -> Path:
    phase = wigner.phase
    return write_container(
        path,
        "wigner",
        wigner.values,
        model_hash,
        seed=seed,
        dims=["x", "p"],
        spacings=[phase.dx, phase.dp],
        metadata={
            "phase": _phase_metadata(phase),
            "z": wigner.z,
            "imaginary_residue": wigner.imaginary_residue,
            "band_residue": wigner.band_residue,
        },
    )


def save_moment_field(
    path: Path, field: MomentField, model_hash: str, seed: Optional[int] = None
) -> Path:
    """Grid values when resolved, otherwise (estimates, standard errors) at probes."""
    metadata: dict[str, Any] = {
        "order": field.order,
        "z": field.z,
        "method": field.method,
    }
    if field.phase is not None:
        metadata["phase"] = _phase_metadata(field.phase)
    if field.probes is not None:
        metadata["probes"] = np.asarray(field.probes).tolist()
    if field.values is not None:
        dims = [axis for _ in range(field.order) for axis in ("x", "p")]
        values = field.values
    else:
        if field.estimates is None or field.standard_errors is None:
            raise ContainerError("moment field has neither grid values nor estimates")
        dims = ["statistic", "probe"]
        values = np.stack([field.estimates, field.standard_errors])
    if (
        field.values is not None
        and field.estimates is not None
        and field.standard_errors is not None
    ):
        metadata["estimates"] = np.asarray(field.estimates).tolist()
        metadata["standard_errors"] = np.asarray(field.standard_errors).tolist()
    return write_container(
        path, "moment", values, model_hash, seed=seed, dims=dims, metadata=metadata
    )


def save_ray_ensemble(path: Path, ensemble: RayEnsemble, model_hash: str) -> Path:
    """Rows (position, momentum) per tuple member, and weights in the metadata."""
    values = np.stack([ensemble.positions, ensemble.momenta], axis=-2)
    return write_container(
        path,
        "rays",
        values,
        model_hash,
        seed=ensemble.seed,
        dims=["tuple", "member", "coordinate", "axis"],
        metadata={"z": ensemble.z, "weights": ensemble.weights.tolist()},
    )


# Loader ------------------------------------------------------------------------


class ContainerLoader:
    """Reads containers produced for one configuration and rebuilds typed objects."""

    def __init__(self, model_hash: str) -> None:
        self.model_hash = model_hash

    def load(self, path: Path, kind: str) -> tuple[dict[str, Any], np.ndarray]:
        header, values = read_container(path)
        if header["kind"] != kind:
            raise ContainerError(f"{path} holds a {header['kind']}, expected a {kind}")
        if header["model_hash"] != self.model_hash:
            raise ContainerError(
                f"{path} was written for configuration {header['model_hash'][:12]}, "
                f"expected {self.model_hash[:12]}"
            )
        return header, values

    def load_realization(self, path: Path) -> FieldRealization:
        header, values = self.load(path, "realization")
        metadata = header["metadata"]
        return FieldRealization(
            values=values,
            dz_field=header["spacings"][0],
            seed=header["seed"],
            model=SpectrumModel.parse_obj(metadata["spectrum"]),
            grid=SimGrid.parse_obj(metadata["grid"]),
            index=metadata["index"],
            epsilon=metadata["epsilon"],
        )

    def load_screens(self, path: Path) -> ScreenStack:
        header, values = self.load(path, "screens")
        metadata = header["metadata"]
        return ScreenStack(
            screens=values,
            dz=header["spacings"][0],
            seed=header["seed"],
            model=SpectrumModel.parse_obj(metadata["spectrum"]),
            grid=SimGrid.parse_obj(metadata["grid"]),
            index=metadata["index"],
        )

    def load_beam(self, path: Path) -> ComplexBeam:
        header, values = self.load(path, "beam")
        metadata = header["metadata"]
        return ComplexBeam(
            values=np.asarray(values, dtype=complex),
            grid=SimGrid.parse_obj(metadata["grid"]),
            z=metadata["z"],
        )

    def load_wigner(self, path: Path) -> WignerGrid:
        header, values = self.load(path, "wigner")
        metadata = header["metadata"]
        return WignerGrid(
            values=values,
            phase=PhaseSpaceGrid.parse_obj(metadata["phase"]),
            z=metadata["z"],
            imaginary_residue=metadata["imaginary_residue"],
            band_residue=metadata["band_residue"],
        )

    def load_moment_field(self, path: Path) -> MomentField:
        header, values = self.load(path, "moment")
        metadata = header["metadata"]
        phase = None
        if "phase" in metadata:
            phase = PhaseSpaceGrid.parse_obj(metadata["phase"])
        probes = np.asarray(metadata["probes"]) if "probes" in metadata else None
        if header["dims"] == ["statistic", "probe"]:
            return MomentField(
                order=metadata["order"],
                z=metadata["z"],
                phase=phase,
                probes=probes,
                estimates=values[0],
                standard_errors=values[1],
                method=metadata["method"],
            )
        estimates = metadata.get("estimates")
        errors = metadata.get("standard_errors")
        return MomentField(
            order=metadata["order"],
            z=metadata["z"],
            values=values,
            phase=phase,
            probes=probes,
            estimates=None if estimates is None else np.asarray(estimates),
            standard_errors=None if errors is None else np.asarray(errors),
            method=metadata["method"],
        )

    def load_ray_ensemble(self, path: Path) -> RayEnsemble:
        header, values = self.load(path, "rays")
        metadata = header["metadata"]
        return RayEnsemble(
            positions=values[..., 0, :],
            momenta=values[..., 1, :],
            weights=np.asarray(metadata["weights"], dtype=float),
            seed=header["seed"],
            z=metadata["z"],
        )
