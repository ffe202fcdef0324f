import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any
from typing import Literal
from typing import Optional

import yaml
from pydantic import BaseModel
from pydantic import BaseSettings
from pydantic import Field
from pydantic import PositiveFloat
from pydantic import PositiveInt
from pydantic import root_validator
from pydantic import validator

from .background import BackgroundModel
from .grid import SimGrid
from .moments import MAX_MEMORY_BYTES
from .moments import Regime
from .schedule import PhysicalScales
from .schedule import ScheduleFamily
from .schedule import SchedulePoint
from .schedule import TheoremCase
from .schedule import validate_schedule
from .spectra import SpectrumModel

SCHEMA_VERSION = 1

PhasePoint = tuple[float, float]
ProbePair = tuple[PhasePoint, PhasePoint]


class Settings(BaseSettings):
    class Config:
        frozen = True
        env_nested_delimiter = "__"
        env_prefix = "TURBWIG_"

    threads: PositiveInt = Field(
        1, description="Worker threads for realization-level work"
    )
    chunk_size: PositiveInt = Field(
        8, description="Realizations per work item; fixes the reduction order"
    )
    output_dir: Path = Field(Path("out"), description="Default directory for artifacts")
    log_level: str = Field("INFO", description="Minimum level of emitted log events")
    max_memory_bytes: PositiveInt = Field(
        MAX_MEMORY_BYTES,
        description="Refuse runs whose estimated peak memory exceeds this",
    )
    max_work_units: PositiveFloat = Field(
        1e12,
        description="Refuse runs whose grid points × steps × realizations exceed this",
    )
    dry_run: bool = Field(
        False,
        description="When True, reports are logged but no file is written",
    )


class BeamConfig(BaseModel):
    class Config:
        frozen = True

    width: PositiveFloat = Field(1.0, description="Gaussian waist")
    centre: float = 0.0
    momentum: float = Field(0.0, description="Tilt p₀ of the phase exp(i p₀x/γ)")
    chirp: float = 0.0


class RayConfig(BaseModel):
    class Config:
        frozen = True

    mode: Literal["medium", "sde"] = "sde"
    count: PositiveInt = Field(10_000, description="Rays or ray tuples")
    nsteps: PositiveInt = Field(200, description="Steps over the propagation distance")
    chunk_size: PositiveInt = 1024
    mean: tuple[float, float] = (0.0, 0.0)
    covariance: tuple[float, float, float] = Field(
        (0.25, 0.25, 0.0), description="Initial (var_x, var_p, cov_xp) of the rays"
    )
    bandwidth: Optional[tuple[PositiveFloat, PositiveFloat]] = None
    trajectories: bool = Field(False, description="Also dump final ray states as CSV")


class NPointConfig(BaseModel):
    class Config:
        frozen = True

    n: int = Field(2, ge=1, le=4)
    method: Literal["rays", "grid"] = "rays"
    probes: list[list[PhasePoint]] = Field(
        default_factory=list, description="Probe tuples, each n pairs (x, p)"
    )
    grid_nsteps: PositiveInt = 64

    @root_validator(skip_on_failure=True)
    def check_probes(cls, values: dict[str, Any]) -> dict[str, Any]:
        for probe in values["probes"]:
            if len(probe) != values["n"]:
                raise ValueError(f"every probe needs {values['n']} (x, p) pairs")
        return values


class Observable(str, Enum):
    MEAN = "mean"
    SECOND_MOMENT = "second_moment"
    MOMENTUM_VARIANCE = "momentum_variance"


class ExperimentConfig(BaseModel):
    class Config:
        frozen = True

    schema_version: int = Field(..., description="Version of the configuration schema")
    regime: Regime = Regime.WIGNER_MOYAL
    spectrum: SpectrumModel
    grid: SimGrid = Field(default_factory=SimGrid)
    beam: BeamConfig = Field(default_factory=BeamConfig)
    background: BackgroundModel = Field(default_factory=BackgroundModel)
    theorem: Optional[TheoremCase] = None
    schedule: list[SchedulePoint] = Field(default_factory=list)
    schedule_family: Optional[ScheduleFamily] = None
    ensemble_size: PositiveInt = Field(
        200, description="Realizations M per schedule point"
    )
    z: PositiveFloat = Field(1.0, description="Propagation distance")
    nsteps: PositiveInt = Field(200, description="Split-step steps over z")
    nz: Optional[PositiveInt] = Field(
        None, description="Stored medium slices; derived from z and epsilon when unset"
    )
    dz_field: Optional[PositiveFloat] = Field(
        None, description="Slice spacing of the unscaled medium, default dx"
    )
    truncate_infrared: bool = False
    medium: Literal["volume", "screens"] = Field(
        "volume",
        description="Resolved media, or white-noise screens for the limit itself",
    )
    rays: RayConfig = Field(default_factory=RayConfig)
    npoint: NPointConfig = Field(default_factory=NPointConfig)
    observables: list[Observable] = Field(default_factory=lambda: [Observable.MEAN])
    second_moment_probes: list[ProbePair] = Field(
        default_factory=list,
        description="Pairs of phase-space points (a, b) for E[W(a)W(b)]",
    )
    density_probes: list[PhasePoint] = Field(
        default_factory=list,
        description="Phase-space points for ray density comparisons",
    )
    seed: int = Field(0, ge=0)
    output_dir: Optional[Path] = None
    physical: Optional[PhysicalScales] = None

    @validator("schema_version")
    def supported_version(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schema_version {value}, expected {SCHEMA_VERSION}"
            )
        return value

    @root_validator(skip_on_failure=True)
    def check_schedule(cls, values: dict[str, Any]) -> dict[str, Any]:
        if values["schedule"] and values["schedule_family"] is not None:
            raise ValueError("give either 'schedule' or 'schedule_family', not both")
        theorem = values["theorem"]
        regime = values["regime"]
        if theorem is not None and theorem.liouville != (regime == Regime.LIOUVILLE):
            raise ValueError(
                f"theorem case {theorem.value} does not match regime {regime.value}"
            )
        return values

    def schedule_points(self) -> list[SchedulePoint]:
        """The schedule, validated against the theorem case when one is set."""
        if self.schedule_family is not None:
            points = self.schedule_family.points()
        elif self.schedule:
            points = list(self.schedule)
        else:
            points = [
                SchedulePoint(
                    epsilon=self.grid.epsilon,
                    gamma=self.grid.gamma,
                    eta=self.spectrum.eta,
                    rho=self.spectrum.rho,
                )
            ]
        if self.theorem is not None:
            family = self.schedule_family
            validate_schedule(points, self.theorem, self.spectrum.H, family)
        return points

    def with_overrides(
        self, seed: Optional[int] = None, output_dir: Optional[Path] = None
    ) -> "ExperimentConfig":
        update: dict[str, Any] = {}
        if seed is not None:
            update["seed"] = seed
        if output_dir is not None:
            update["output_dir"] = output_dir
        return self.copy(update=update)


def load_config(path: Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as stream:
        raw = yaml.safe_load(stream)
    if not isinstance(raw, dict):
        raise ValueError(f"{path} does not contain a configuration mapping")
    return ExperimentConfig.parse_obj(raw)


def canonical_json(config: BaseModel) -> str:
    """Sorted compact JSON; the output directory does not take part."""
    data = json.loads(config.json(exclude={"output_dir"}))
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: BaseModel) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()
