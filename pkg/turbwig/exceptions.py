from typing import Optional
from typing import Sequence


class TurbwigError(Exception):
    """Base exception."""


class RegimeViolation(TurbwigError):
    def __init__(self, condition: str, detail: str = "") -> None:
        self.condition = condition
        self.detail = detail

    def __str__(self) -> str:
        if self.detail:
            return f"Regime condition violated: {self.condition} ({self.detail})"
        return f"Regime condition violated: {self.condition}"


class DivergentIntegralError(TurbwigError):
    def __init__(self, integral: str, end: str, condition: str) -> None:
        self.integral = integral
        self.end = end
        self.condition = condition

    def __str__(self) -> str:
        return (
            f"{self.integral} diverges at the {self.end} end; "
            f"convergence requires {self.condition}"
        )


class StepSizeError(TurbwigError):
    def __init__(self, quantity: str, value: float, limit: float) -> None:
        self.quantity = quantity
        self.value = value
        self.limit = limit

    def __str__(self) -> str:
        return (
            f"Step too large: {self.quantity} = {self.value:.6g} "
            f"exceeds {self.limit:.6g}"
        )


class GridMismatchError(TurbwigError):
    def __init__(self, message: str) -> None:
        self.message = message

    def __str__(self) -> str:
        return self.message


class DimensionError(GridMismatchError):
    def __init__(self, operation: str, dim: int, supported: Sequence[int]) -> None:
        self.operation = operation
        self.dim = dim
        self.supported = list(supported)
        super().__init__(
            f"{operation} supports transverse dimension {self.supported}, got {dim}"
        )


class GridAlignmentError(TurbwigError):
    def __init__(self, gamma: float, admissible: Sequence[float]) -> None:
        self.gamma = gamma
        self.admissible = list(admissible)

    def __str__(self) -> str:
        values = ", ".join(f"{value:.12g}" for value in self.admissible)
        return (
            f"gamma = {self.gamma:.12g} does not satisfy dp*N*dx = pi*gamma "
            f"on this phase-space grid; admissible gamma: {values}"
        )


class OutOfRangeError(TurbwigError):
    def __init__(self, value: float, low: float, high: float, what: str = "z") -> None:
        self.value = value
        self.low = low
        self.high = high
        self.what = what

    def __str__(self) -> str:
        return (
            f"{self.what} = {self.value:.6g} is outside the synthesized range "
            f"[{self.low:.6g}, {self.high:.6g}]"
        )


class NonFiniteError(TurbwigError):
    def __init__(self, step: int, z: float) -> None:
        self.step = step
        self.z = z

    def __str__(self) -> str:
        return f"Non-finite values after step {self.step} (z = {self.z:.6g})"


class AliasingError(TurbwigError):
    def __init__(self, axis: str, residue: float, tolerance: float) -> None:
        self.axis = axis
        self.residue = residue
        self.tolerance = tolerance

    def __str__(self) -> str:
        return (
            f"Initial data reaches the edge of the {self.axis} grid "
            f"(relative residue {self.residue:.3g} > {self.tolerance:.3g})"
        )


class ScheduleViolation(TurbwigError):
    def __init__(self, case: str, inequality: str, index: Optional[int] = None) -> None:
        self.case = case
        self.inequality = inequality
        self.index = index

    def __str__(self) -> str:
        where = "" if self.index is None else f" at schedule point {self.index}"
        return f"Schedule violates case {self.case}{where}: {self.inequality}"


class ResourceCeilingError(TurbwigError):
    def __init__(self, resource: str, estimate: float, ceiling: float) -> None:
        self.resource = resource
        self.estimate = estimate
        self.ceiling = ceiling

    def __str__(self) -> str:
        return (
            f"Estimated {self.resource} {self.estimate:.4g} exceeds the configured "
            f"ceiling {self.ceiling:.4g}"
        )


class ContainerError(TurbwigError):
    def __init__(self, message: str) -> None:
        self.message = message

    def __str__(self) -> str:
        return self.message


class EnsembleError(TurbwigError):
    def __init__(self, message: str) -> None:
        self.message = message

    def __str__(self) -> str:
        return self.message


class EstimatorError(TurbwigError):
    def __init__(self, message: str) -> None:
        self.message = message

    def __str__(self) -> str:
        return self.message
