"""Smooth large-scale inhomogeneities: the modulation μ(z, x) and background V₀(z, x).

Profiles are closed-form and carry analytic gradients; none of them is sampled.
Positions are arrays of shape ``(..., d)``.
"""
import math
from typing import Literal
from typing import Union

import numpy as np
from pydantic import BaseModel
from pydantic import Field
from pydantic import PositiveFloat


class _Profile(BaseModel):
    class Config:
        frozen = True

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def bound(self) -> float:
        """Supremum of the absolute value over all (z, x)."""
        raise NotImplementedError

    @property
    def gradient_bound(self) -> float:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False


class ConstantProfile(_Profile):
    kind: Literal["constant"] = "constant"
    level: float = Field(0.0, description="Constant value")

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x)[:-1], self.level)

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x))

    @property
    def bound(self) -> float:
        return abs(self.level)

    @property
    def gradient_bound(self) -> float:
        return 0.0

    @property
    def is_constant(self) -> bool:
        return True


class GradedIndexProfile(_Profile):
    """Harmonic profile ``offset - ω²|x - centre|²/2``."""

    kind: Literal["graded_index"] = "graded_index"
    omega: float = Field(..., ge=0, description="Angular frequency of the rays")
    offset: float = 0.0
    centre: float = Field(0.0, description="Centre coordinate, shared by all axes")

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        shifted = np.asarray(x) - self.centre
        return self.offset - 0.5 * self.omega**2 * np.sum(shifted**2, axis=-1)

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        return -(self.omega**2) * (np.asarray(x) - self.centre)

    @property
    def bound(self) -> float:
        return math.inf if self.omega > 0 else abs(self.offset)

    @property
    def gradient_bound(self) -> float:
        return math.inf if self.omega > 0 else 0.0


class LinearProfile(_Profile):
    kind: Literal["linear"] = "linear"
    level: float = 0.0
    slope: list[float] = Field(..., description="Constant gradient, one entry per axis")

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        return self.level + np.asarray(x) @ np.asarray(self.slope)

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.slope), np.shape(x)).copy()

    @property
    def bound(self) -> float:
        return abs(self.level) if not any(self.slope) else math.inf

    @property
    def gradient_bound(self) -> float:
        return float(np.linalg.norm(self.slope))


class SmoothStepProfile(_Profile):
    """``low + (high - low)(1 + tanh((x_axis - position)/width))/2``."""

    kind: Literal["smooth_step"] = "smooth_step"
    low: float
    high: float
    position: float = 0.0
    width: PositiveFloat = 1.0
    axis: int = Field(0, ge=0)

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        s = (np.asarray(x)[..., self.axis] - self.position) / self.width
        return self.low + (self.high - self.low) * 0.5 * (1 + np.tanh(s))

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        s = (x[..., self.axis] - self.position) / self.width
        grad = np.zeros(x.shape)
        step = 0.5 * (self.high - self.low)
        grad[..., self.axis] = step / (self.width * np.cosh(s) ** 2)
        return grad

    @property
    def bound(self) -> float:
        return max(abs(self.low), abs(self.high))

    @property
    def gradient_bound(self) -> float:
        return abs(self.high - self.low) / (2 * self.width)


class GaussianBumpProfile(_Profile):
    kind: Literal["gaussian_bump"] = "gaussian_bump"
    base: float = 0.0
    height: float
    width: PositiveFloat = 1.0
    centre: float = 0.0

    def value(self, z: float, x: np.ndarray) -> np.ndarray:
        r2 = np.sum((np.asarray(x) - self.centre) ** 2, axis=-1)
        return self.base + self.height * np.exp(-r2 / (2 * self.width**2))

    def gradient(self, z: float, x: np.ndarray) -> np.ndarray:
        shifted = np.asarray(x) - self.centre
        r2 = np.sum(shifted**2, axis=-1)
        bump = self.height * np.exp(-r2 / (2 * self.width**2))
        return -shifted * (bump / self.width**2)[..., None]

    @property
    def bound(self) -> float:
        return max(abs(self.base), abs(self.base + self.height))

    @property
    def gradient_bound(self) -> float:
        return abs(self.height) / (self.width * math.sqrt(math.e))


Profile = Union[
    ConstantProfile,
    GradedIndexProfile,
    LinearProfile,
    SmoothStepProfile,
    GaussianBumpProfile,
]


class BackgroundModel(BaseModel):
    """μ multiplies the fluctuation, V₀ is added to it."""

    class Config:
        frozen = True

    mu: Profile = Field(
        ConstantProfile(level=1.0), description="Multiplicative modulation μ(z, x)"
    )
    v0: Profile = Field(
        ConstantProfile(level=0.0), description="Additive background V₀(z, x)"
    )

    @property
    def is_homogeneous(self) -> bool:
        """μ ≡ 1 and ∇V₀ ≡ 0."""
        return (
            self.mu.is_constant
            and math.isclose(self.mu.bound, 1.0)
            and self.v0.is_constant
        )

    @property
    def mu_bound(self) -> float:
        return self.mu.bound

    def potential(
        self, z: float, x: np.ndarray, fluctuation: np.ndarray, epsilon: float
    ) -> np.ndarray:
        """Total potential ``V₀ + (μ/ε) V`` with ``V`` already read at ``z/ε²``."""
        return self.v0.value(z, x) + self.mu.value(z, x) / epsilon * fluctuation
