"""Scaling schedules ε ↦ (γ, η, ρ) and the convergence conditions they must meet."""
import math
from enum import Enum
from typing import Optional
from typing import Sequence

import structlog
from pydantic import BaseModel
from pydantic import Field
from pydantic import PositiveFloat
from pydantic import validator

from .exceptions import ScheduleViolation

logger = structlog.get_logger()


class TheoremCase(str, Enum):
    """Convergence regimes: 1x towards Wigner-Moyal, 2x towards Liouville."""

    WM_FIXED_ETA = "1i"
    WM_VANISHING_ETA = "1ii"
    LIOUVILLE_FIXED = "2i"
    LIOUVILLE_GROWING_RHO = "2ii"
    LIOUVILLE_VANISHING_ETA = "2iii"

    @property
    def liouville(self) -> bool:
        return self.value.startswith("2")


class SchedulePoint(BaseModel):
    class Config:
        frozen = True

    epsilon: PositiveFloat
    gamma: PositiveFloat
    eta: float = Field(..., ge=0)
    rho: PositiveFloat = math.inf


class ScheduleFamily(BaseModel):
    """Power laws ρ = ρ₀ε^(-β_ρ), η = η₀ε^(β_η), γ = γ₀ε^(β_γ)."""

    class Config:
        frozen = True

    epsilons: list[PositiveFloat] = Field(..., min_items=1)
    rho0: PositiveFloat = math.inf
    beta_rho: float = Field(0.0, ge=0)
    eta0: float = Field(..., ge=0)
    beta_eta: float = Field(0.0, ge=0)
    gamma0: PositiveFloat = 1.0
    beta_gamma: float = Field(0.0, ge=0)

    def points(self) -> list[SchedulePoint]:
        return [
            SchedulePoint(
                epsilon=epsilon,
                gamma=self.gamma0 * epsilon**self.beta_gamma,
                eta=self.eta0 * epsilon**self.beta_eta,
                rho=self.rho0 * epsilon ** (-self.beta_rho),
            )
            for epsilon in self.epsilons
        ]


def schedule_metric(point: SchedulePoint, H: float) -> float:
    """ε·ρ^(2-H), echoed in reports for audit."""
    return point.epsilon * point.rho ** (2 - H)


def _vanishing_eta_metric(point: SchedulePoint, H: float) -> float:
    if point.eta == 0:
        return math.inf
    return point.epsilon / point.eta * (1 / point.eta + point.rho ** (2 - H))


def _decreasing(
    values: Sequence[float],
    case: TheoremCase,
    inequality: str,
) -> None:
    for index, value in enumerate(values):
        if not math.isfinite(value):
            raise ScheduleViolation(case.value, f"{inequality} finite", index)
        if index and value >= values[index - 1]:
            raise ScheduleViolation(case.value, f"{inequality} decreasing", index)


def _fixed(points: Sequence[SchedulePoint], attribute: str, case: TheoremCase) -> None:
    first = getattr(points[0], attribute)
    for index, point in enumerate(points):
        if not math.isclose(getattr(point, attribute), first, rel_tol=1e-12):
            raise ScheduleViolation(case.value, f"{attribute} fixed", index)


def _check_family(family: ScheduleFamily, case: TheoremCase, H: float) -> None:
    """Exponent inequalities that make the limits hold for every ε → 0."""
    if case in (TheoremCase.WM_FIXED_ETA, TheoremCase.LIOUVILLE_GROWING_RHO):
        if family.beta_rho >= 1 / (2 - H):
            raise ScheduleViolation(case.value, "beta_rho < 1/(2-H)")
    if case == TheoremCase.WM_VANISHING_ETA:
        if 2 * family.beta_eta >= 1:
            raise ScheduleViolation(case.value, "beta_eta < 1/2")
        if family.beta_eta + family.beta_rho * (2 - H) >= 1:
            raise ScheduleViolation(case.value, "beta_eta + beta_rho(2-H) < 1")
    if case == TheoremCase.LIOUVILLE_VANISHING_ETA and 2 * family.beta_eta >= 1:
        raise ScheduleViolation(case.value, "beta_eta < 1/2")
    if case.liouville and family.beta_gamma <= 0:
        raise ScheduleViolation(case.value, "beta_gamma > 0")


def validate_schedule(
    points: Sequence[SchedulePoint],
    case: TheoremCase,
    H: float,
    family: Optional[ScheduleFamily] = None,
) -> list[float]:
    """Check a schedule against its theorem case; return the audit metrics.

    Points are read in order of decreasing ε; every quantity that must tend
    to zero is required to decrease strictly from point to point.
    """
    if not points:
        raise ScheduleViolation(case.value, "at least one schedule point")
    if family is not None:
        _check_family(family, case, H)
    epsilons = [point.epsilon for point in points]
    _decreasing(epsilons, case, "epsilon")
    metrics = [schedule_metric(point, H) for point in points]
    if not case.liouville:
        _fixed(points, "gamma", case)
    else:
        _decreasing([point.gamma for point in points], case, "gamma")
    if case == TheoremCase.WM_FIXED_ETA:
        _fixed(points, "eta", case)
        _decreasing(metrics, case, "epsilon*rho^(2-H)")
    elif case == TheoremCase.WM_VANISHING_ETA:
        if H >= 0.5:
            raise ScheduleViolation(case.value, "H < 1/2")
        _decreasing(
            [_vanishing_eta_metric(point, H) for point in points],
            case,
            "epsilon/eta*(1/eta + rho^(2-H))",
        )
    elif case == TheoremCase.LIOUVILLE_FIXED:
        _fixed(points, "eta", case)
        _fixed(points, "rho", case)
        if not math.isfinite(points[0].rho) or points[0].eta <= 0:
            raise ScheduleViolation(case.value, "rho < inf and eta > 0")
    elif case == TheoremCase.LIOUVILLE_GROWING_RHO:
        if H <= 0.5:
            raise ScheduleViolation(case.value, "H > 1/2")
        _fixed(points, "eta", case)
        _decreasing(metrics, case, "epsilon*rho^(2-H)")
    else:
        if H >= 0.5:
            raise ScheduleViolation(case.value, "H < 1/2")
        _fixed(points, "rho", case)
        if not math.isfinite(points[0].rho):
            raise ScheduleViolation(case.value, "rho < inf")
        ratios = [
            point.epsilon / point.eta**2 if point.eta > 0 else math.inf
            for point in points
        ]
        _decreasing(ratios, case, "epsilon/eta^2")
    if any(point.eta <= 0 for point in points):
        raise ScheduleViolation(case.value, "eta > 0 at every point")
    logger.debug("Validated schedule", case=case.value, points=len(points))
    return metrics


class PhysicalScales(BaseModel):
    """Dimensional inputs of the scaled problem."""

    class Config:
        frozen = True

    sigma: PositiveFloat = Field(
        ..., description="Standard deviation of the index fluctuation"
    )
    transverse_length: PositiveFloat = Field(..., description="Transverse scale L_x")
    propagation_length: PositiveFloat = Field(
        ..., description="Propagation distance L_z"
    )
    wavenumber: PositiveFloat = Field(..., description="Carrier wavenumber k₀")
    outer_scale: PositiveFloat = Field(..., description="Outer scale L₀")
    inner_scale: PositiveFloat = Field(..., description="Inner scale ℓ₀")
    H: float = Field(1 / 3, gt=0, lt=1)

    @validator("propagation_length")
    def longer_than_wide(cls, value: float, values: dict) -> float:
        if "transverse_length" in values and value < values["transverse_length"]:
            raise ValueError(
                "the propagation distance must exceed the transverse scale"
            )
        return value

    @property
    def epsilon(self) -> float:
        return math.sqrt(self.transverse_length / self.propagation_length)

    @property
    def gamma(self) -> float:
        return self.propagation_length / (self.wavenumber * self.transverse_length**2)

    @property
    def eta(self) -> float:
        return self.transverse_length / self.outer_scale

    @property
    def rho(self) -> float:
        return self.transverse_length / self.inner_scale

    @property
    def mu(self) -> float:
        """Strength σL_x^H/ε³ of the fluctuation in scaled units."""
        return self.sigma * self.transverse_length**self.H / self.epsilon**3

    def derived(self) -> dict[str, float]:
        return {
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "eta": self.eta,
            "rho": self.rho,
            "mu": self.mu,
        }
