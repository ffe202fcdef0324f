import math
from typing import Optional

import numpy as np
from pydantic import BaseModel
from pydantic import Field
from pydantic import PositiveFloat
from pydantic import validator

from .exceptions import GridMismatchError


class SimGrid(BaseModel):
    """Periodic transverse box together with the physical scalings.

    Coordinates are centred: index ``points // 2`` sits at ``x = 0``.
    """

    class Config:
        frozen = True

    dim: int = Field(1, ge=1, le=3, description="Transverse dimension d")
    points: int = Field(256, ge=4, description="Grid points per transverse axis")
    length: PositiveFloat = Field(32.0, description="Side of the periodic box")
    dz: PositiveFloat = Field(1e-3, description="Default longitudinal step")
    epsilon: PositiveFloat = Field(1.0, description="White-noise scaling parameter")
    gamma: PositiveFloat = Field(1.0, description="Fresnel number")
    ktilde: PositiveFloat = Field(1.0, description="Normalized wavenumber")

    @validator("points")
    def points_even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("points must be even")
        return value

    @property
    def dx(self) -> float:
        return self.length / self.points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def dq(self) -> float:
        return 2 * math.pi / self.length

    @property
    def q_nyquist(self) -> float:
        return math.pi / self.dx

    def axis(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.dx

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.points, d=self.dx)

    def coordinates(self) -> np.ndarray:
        """Array of shape ``shape + (dim,)`` holding the grid positions."""
        axes = [self.axis()] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def wavevectors(self) -> np.ndarray:
        axes = [self.wavenumbers()] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def q_squared(self) -> np.ndarray:
        return np.sum(self.wavevectors() ** 2, axis=-1)

    def with_scaling(
        self,
        epsilon: Optional[float] = None,
        gamma: Optional[float] = None,
        ktilde: Optional[float] = None,
    ) -> "SimGrid":
        update = {
            key: value
            for key, value in (
                ("epsilon", epsilon),
                ("gamma", gamma),
                ("ktilde", ktilde),
            )
            if value is not None
        }
        return self.copy(update=update)

    def same_box(self, other: "SimGrid") -> bool:
        return (
            self.dim == other.dim
            and self.points == other.points
            and math.isclose(self.length, other.length, rel_tol=1e-12)
        )

    def require_same_box(self, other: "SimGrid", what: str) -> None:
        if not self.same_box(other):
            raise GridMismatchError(
                f"{what} was built on a {other.points}^{other.dim} box of side "
                f"{other.length}, expected {self.points}^{self.dim} "
                f"of side {self.length}"
            )
