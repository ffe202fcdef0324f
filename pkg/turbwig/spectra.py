"""Spectral density models and the covariance objects derived from them.

Conventions: ``B(x) = ∫ exp(i k·x) Φ(k) dk`` over the ``(d+1)``-dimensional
wavevector ``k = (ξ, k⊥)``; the white-noise transverse density is
``Φ_eff(q) = 2π Φ(0, q)``.
"""
import math
from dataclasses import dataclass
from enum import Enum
from types import FunctionType
from typing import Any
from typing import Callable
from typing import Iterator
from typing import Optional

import numpy as np
import structlog
from more_itertools import pairwise
from pydantic import BaseModel
from pydantic import Field
from pydantic import PyObject
from pydantic import root_validator
from scipy import integrate
from scipy import special
from scipy.interpolate import CubicSpline

from .exceptions import DimensionError
from .exceptions import DivergentIntegralError
from .exceptions import RegimeViolation

logger = structlog.get_logger()

EPSABS = 1e-10
EPSREL = 1e-8
QUAD_LIMIT = 500
MAX_CHUNKS = 20000

RadialFunction = Callable[[Any], Any]


def _callable_path(function: Callable) -> str:
    return f"{function.__module__}.{function.__qualname__}"


class SpectrumForm(str, Enum):
    VON_KARMAN = "von_karman"
    POWER_LAW_BOUNDED = "power_law_bounded"
    CUSTOM = "custom"


class SpectrumModel(BaseModel):
    class Config:
        frozen = True
        json_encoders = {FunctionType: _callable_path}

    form: SpectrumForm = Field(
        SpectrumForm.VON_KARMAN, description="Closed form of the spectral density"
    )
    H: float = Field(..., gt=0, lt=1, description="Hölder exponent")
    eta: float = Field(..., ge=0, description="Infrared cutoff (inverse outer scale)")
    rho: float = Field(
        math.inf, gt=0, description="Ultraviolet cutoff (inverse inner scale)"
    )
    amplitude: float = Field(
        1.0,
        ge=0,
        description=(
            "Variance for the von Karman form, prefactor K for the bounded power "
            "law, scale factor for custom densities"
        ),
    )
    dim: int = Field(1, ge=1, le=3, description="Transverse dimension d")
    density: Optional[PyObject] = Field(
        None,
        description=(
            "Custom density as an import path 'module.function'; called as "
            "density(xi, k) with k of shape (..., dim)"
        ),
    )
    bound_constant: Optional[float] = Field(
        None, gt=0, description="Constant K of the upper bound for custom densities"
    )

    @root_validator(skip_on_failure=True)
    def check_form(cls, values: dict[str, Any]) -> dict[str, Any]:
        form = values["form"]
        if form == SpectrumForm.VON_KARMAN and values["eta"] == 0:
            raise ValueError(
                "the von Karman form needs eta > 0; use power_law_bounded for eta = 0"
            )
        if form == SpectrumForm.CUSTOM:
            if values.get("density") is None or values.get("bound_constant") is None:
                raise ValueError("custom spectra need 'density' and 'bound_constant'")
        elif values.get("density") is not None:
            raise ValueError("'density' is only used by the custom form")
        return values

    @property
    def exponent(self) -> float:
        """Decay exponent ``a = H + (d+1)/2`` of the density."""
        return self.H + (self.dim + 1) / 2

    @property
    def prefactor(self) -> float:
        """Constant K of the bound, attained with equality by the built-in forms."""
        if self.form == SpectrumForm.VON_KARMAN:
            a = self.exponent
            return (
                self.amplitude
                * special.gamma(a)
                * self.eta ** (2 * self.H)
                / (special.gamma(self.H) * math.pi ** ((self.dim + 1) / 2))
            )
        if self.form == SpectrumForm.POWER_LAW_BOUNDED:
            return self.amplitude
        assert self.bound_constant is not None
        return self.amplitude * self.bound_constant

    @property
    def isotropic(self) -> bool:
        """Isotropic in all ``d+1`` dimensions (no transverse cutoff)."""
        return self.form != SpectrumForm.CUSTOM and math.isinf(self.rho)

    def check_dim(self, dim: int) -> None:
        if dim != self.dim:
            raise DimensionError("spectrum on this grid", dim, [self.dim])

    def breakpoints(self) -> list[float]:
        scales = {1.0, 10.0}
        if self.eta > 0:
            scales.add(self.eta)
        if math.isfinite(self.rho):
            scales.update({self.rho, 10 * self.rho})
        return sorted(scales)


def _uv_factor(model: SpectrumModel, k2: Any) -> Any:
    if math.isinf(model.rho):
        return np.ones_like(np.asarray(k2, dtype=float))
    return (1.0 + np.asarray(k2, dtype=float) / model.rho**2) ** -2


def _custom(model: SpectrumModel, xi: Any, k: np.ndarray) -> np.ndarray:
    assert model.density is not None
    return model.amplitude * np.asarray(model.density(xi, k), dtype=float)


def eval_spectrum(model: SpectrumModel, kvec: Any) -> np.ndarray:
    """Evaluate Φ_{η,ρ} at wavevectors of shape ``(..., d+1)``."""
    kvec = np.asarray(kvec, dtype=float)
    if kvec.shape[-1] != model.dim + 1:
        raise DimensionError("eval_spectrum", kvec.shape[-1] - 1, [model.dim])
    if not np.all(np.isfinite(kvec)):
        raise ValueError("wavevectors must be finite")
    xi = kvec[..., 0]
    k = kvec[..., 1:]
    if model.form == SpectrumForm.CUSTOM:
        return _custom(model, xi, k)
    k2 = np.sum(k**2, axis=-1)
    with np.errstate(divide="ignore"):
        base = (model.eta**2 + xi**2 + k2) ** (-model.exponent)
    return model.prefactor * base * _uv_factor(model, k2)


def spectral_bound(model: SpectrumModel, kvec: Any) -> np.ndarray:
    """Right-hand side of the power-law upper bound with the recorded K."""
    kvec = np.asarray(kvec, dtype=float)
    k2 = np.sum(kvec[..., 1:] ** 2, axis=-1)
    full2 = kvec[..., 0] ** 2 + k2
    with np.errstate(divide="ignore"):
        base = (model.eta**2 + full2) ** (-model.exponent)
    return model.prefactor * base * _uv_factor(model, k2)


def transverse_marginal(model: SpectrumModel, k: Any) -> np.ndarray:
    """Φ⊥(|k|) = ∫ Φ(ξ, k) dξ, closed form for the built-in densities."""
    k = np.abs(np.asarray(k, dtype=float))
    if model.form == SpectrumForm.CUSTOM:
        breaks = model.breakpoints()
        flat = [
            2 * _half_line(lambda xi: float(_on_axis(model, xi, kk)), breaks)
            for kk in k.ravel()
        ]
        return np.asarray(flat).reshape(k.shape)
    a = model.exponent
    factor = math.sqrt(math.pi) * special.gamma(a - 0.5) / special.gamma(a)
    with np.errstate(divide="ignore"):
        base = (model.eta**2 + k**2) ** (0.5 - a)
    return model.prefactor * factor * base * _uv_factor(model, k**2)


def _on_axis(model: SpectrumModel, xi: Any, k: Any) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    vec = np.zeros(k.shape + (model.dim,))
    vec[..., 0] = k
    return _custom(model, xi, vec)


def _radial_density(model: SpectrumModel) -> RadialFunction:
    """Φ as a function of |k⃗| for isotropic built-in models."""
    K = model.prefactor
    a = model.exponent
    eta2 = model.eta**2
    return lambda k: K * (eta2 + np.asarray(k) ** 2) ** (-a)


# Radial quadrature -------------------------------------------------------


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / special.gamma(n / 2)


def _quad(f: RadialFunction, lo: float, hi: float, **kwargs: Any) -> float:
    value, _ = integrate.quad(
        f,
        lo,
        hi,
        epsabs=kwargs.pop("epsabs", EPSABS),
        epsrel=kwargs.pop("epsrel", EPSREL),
        limit=QUAD_LIMIT,
        **kwargs,
    )
    return float(value)


def _half_line(
    f: RadialFunction,
    breaks: list[float],
    lower: float = 0.0,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
) -> float:
    edges = [lower] + [b for b in breaks if b > lower]
    total = sum(
        _quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel) for lo, hi in pairwise(edges)
    )
    return total + _quad(f, edges[-1], math.inf, epsabs=epsabs, epsrel=epsrel)


def kernel(n: int, t: Any) -> np.ndarray:
    """Normalized radial Fourier kernel κ_n(t), κ_n(0) = 1.

    ``∫_{R^n} exp(ik·x) f(|k|) dk = |S^{n-1}| ∫ f(k) k^{n-1} κ_n(k|x|) dk``.
    """
    t = np.asarray(t, dtype=float)
    if n == 1:
        return np.cos(t)
    if n == 3:
        return np.sinc(t / math.pi)
    nu = n / 2 - 1
    safe = np.where(t == 0, 1.0, t)
    value = special.gamma(n / 2) * (2 / safe) ** nu * special.jv(nu, safe)
    return np.where(t == 0, 1.0, value)


def _one_minus_kernel(n: int, t: Any) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if n == 1:
        return 2 * np.sin(t / 2) ** 2
    series = t**2 / (2 * n) - t**4 / (8 * n * (n + 2))
    return np.where(np.abs(t) < 1e-3, series, 1 - kernel(n, t))


def _bessel_zeros(nu: float, lower: float) -> Iterator[float]:
    """McMahon approximations of the zeros of J_nu beyond ``lower``."""
    j = max(1, int(lower / math.pi - nu / 2 + 0.25))
    while True:
        beta = (j + nu / 2 - 0.25) * math.pi
        zero = beta - (4 * nu**2 - 1) / (8 * beta)
        if zero > lower:
            yield zero
        j += 1


def _bessel_chunks(
    h: RadialFunction,
    nu: float,
    r: float,
    lower: float,
    upper: float,
    epsabs: float,
    epsrel: float,
) -> float:
    """∫ h(k) J_nu(k r) dk over [lower, upper], summed between zeros."""
    integrand = lambda k: h(k) * special.jv(nu, k * r)  # noqa: E731
    total = 0.0
    previous = lower
    partials: list[float] = []
    quiet = 0
    for count, zero in enumerate(_bessel_zeros(nu, lower * r)):
        edge = zero / r
        if edge >= upper:
            break
        piece = _quad(integrand, previous, edge, epsabs=epsabs, epsrel=epsrel)
        total += piece
        partials.append(total)
        previous = edge
        quiet = quiet + 1 if abs(piece) < max(epsabs, epsrel * abs(total)) else 0
        if math.isinf(upper) and quiet >= 4:
            break
        if count >= MAX_CHUNKS:
            logger.warning("Oscillatory quadrature truncated", nu=nu, r=r)
            break
    if math.isfinite(upper):
        return total + _quad(integrand, previous, upper, epsabs=epsabs, epsrel=epsrel)
    if len(partials) >= 2:
        return 0.5 * (partials[-1] + partials[-2])
    return total


def _kernel_piece(
    g: RadialFunction,
    r: float,
    n: int,
    lo: float,
    hi: float,
    epsabs: float,
    epsrel: float,
) -> float:
    if r == 0:
        return _quad(g, lo, hi, epsabs=epsabs, epsrel=epsrel)
    if n == 1 and lo > 0:
        return _quad(g, lo, hi, weight="cos", wvar=r, epsabs=epsabs, epsrel=epsrel)
    if n == 3 and lo > 0:
        return _quad(
            lambda k: g(k) / (k * r),
            lo,
            hi,
            weight="sin",
            wvar=r,
            epsabs=epsabs,
            epsrel=epsrel,
        )
    if n in (1, 3) or (hi - lo) * r < 50:
        return _quad(
            lambda k: g(k) * kernel(n, k * r), lo, hi, epsabs=epsabs, epsrel=epsrel
        )
    nu = n / 2 - 1
    scale = special.gamma(n / 2) * (2 / r) ** nu
    h = lambda k: scale * g(k) * k ** (-nu)  # noqa: E731
    return _bessel_chunks(h, nu, r, lo, hi, epsabs, epsrel)


def _kernel_tail(
    g: RadialFunction, r: float, n: int, lo: float, epsabs: float, epsrel: float
) -> float:
    if r == 0:
        return _quad(g, lo, math.inf, epsabs=epsabs, epsrel=epsrel)
    if n == 1:
        return _quad(
            g, lo, math.inf, weight="cos", wvar=r, epsabs=epsabs, epsrel=epsrel
        )
    if n == 3:
        return _quad(
            lambda k: g(k) / (k * r),
            lo,
            math.inf,
            weight="sin",
            wvar=r,
            epsabs=epsabs,
            epsrel=epsrel,
        )
    nu = n / 2 - 1
    scale = special.gamma(n / 2) * (2 / r) ** nu
    h = lambda k: scale * g(k) * k ** (-nu)  # noqa: E731
    return _bessel_chunks(h, nu, r, lo, math.inf, epsabs, epsrel)


def kernel_integral(
    g: RadialFunction,
    r: float,
    n: int,
    breaks: list[float],
    lower: float = 0.0,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
) -> float:
    """∫_lower^∞ g(k) κ_n(k r) dk."""
    edges = [lower] + [b for b in breaks if b > lower]
    if edges[-1] == 0:
        edges.append(1.0)
    total = sum(
        _kernel_piece(g, r, n, lo, hi, epsabs, epsrel) for lo, hi in pairwise(edges)
    )
    return total + _kernel_tail(g, r, n, edges[-1], epsabs, epsrel)


def radial_fourier(
    f: RadialFunction,
    r: float,
    n: int,
    breaks: list[float],
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
) -> float:
    """∫_{R^n} exp(i k·x) f(|k|) dk evaluated at |x| = r."""
    area = sphere_area(n)
    g = lambda k: f(k) * np.asarray(k) ** (n - 1)  # noqa: E731
    return area * kernel_integral(g, r, n, breaks, epsabs=epsabs, epsrel=epsrel)


def _radial_increment(
    f: RadialFunction,
    r: float,
    n: int,
    breaks: list[float],
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
) -> float:
    """2 ∫_{R^n} f(|k|) (1 - cos(k·x)) dk at |x| = r."""
    if r == 0:
        return 0.0
    area = sphere_area(n)
    g = lambda k: f(k) * np.asarray(k) ** (n - 1)  # noqa: E731
    split = 20.0 / r
    edges = [0.0] + [b for b in breaks if b < split] + [split]
    low = sum(
        _quad(
            lambda k: g(k) * _one_minus_kernel(n, k * r),
            lo,
            hi,
            epsabs=epsabs,
            epsrel=epsrel,
        )
        for lo, hi in pairwise(edges)
    )
    high = _half_line(g, breaks, lower=split, epsabs=epsabs, epsrel=epsrel)
    high -= kernel_integral(g, r, n, breaks, lower=split, epsabs=epsabs, epsrel=epsrel)
    value = 2 * area * (low + high)
    if not math.isfinite(value):
        raise DivergentIntegralError(
            "structure function integral", "ultraviolet", "an integrable density"
        )
    return value


# Covariance and structure functions --------------------------------------


def total_variance(model: SpectrumModel) -> float:
    """∫Φ over R^{d+1}, the variance B(0)."""
    if model.amplitude == 0:
        return 0.0
    if model.eta == 0 and model.form != SpectrumForm.CUSTOM:
        raise DivergentIntegralError(
            "∫Φ dk", "infrared", "eta > 0 (finite variance)"
        )
    if model.form == SpectrumForm.VON_KARMAN and math.isinf(model.rho):
        return model.amplitude
    if model.isotropic:
        density = _radial_density(model)
        return radial_fourier(density, 0.0, model.dim + 1, model.breakpoints())
    marginal = lambda k: transverse_marginal(model, k)  # noqa: E731
    return radial_fourier(marginal, 0.0, model.dim, model.breakpoints())


def _matern(model: SpectrumModel, r: float) -> float:
    if r == 0:
        return model.amplitude
    t = model.eta * r
    norm = 2 ** (model.H - 1) * special.gamma(model.H)
    return float(model.amplitude * t**model.H * special.kv(model.H, t) / norm)


def _longitudinal_transform(model: SpectrumModel, z: float, k: Any) -> np.ndarray:
    """∫ exp(iξz) (η²+ξ²+k²)^(-a) dξ for the built-in forms."""
    a = model.exponent
    A = np.sqrt(model.eta**2 + np.asarray(k, dtype=float) ** 2)
    if z == 0:
        return math.sqrt(math.pi) * special.gamma(a - 0.5) / special.gamma(a) * A ** (
            1 - 2 * a
        )
    z = abs(z)
    return (
        2
        * math.sqrt(math.pi)
        / special.gamma(a)
        * (z / (2 * A)) ** (a - 0.5)
        * special.kv(a - 0.5, A * z)
    )


def covariance_function(model: SpectrumModel, xvec: Any, method: str = "auto") -> float:
    """Covariance B at the separation ``xvec = (z, x⊥)``.

    ``method`` is ``"bessel"`` (closed form, von Karman with ρ = ∞),
    ``"quadrature"`` or ``"auto"``.
    """
    xvec = np.asarray(xvec, dtype=float)
    if xvec.shape != (model.dim + 1,):
        raise DimensionError("covariance_function", xvec.shape[0] - 1, [model.dim])
    closed = model.form == SpectrumForm.VON_KARMAN and math.isinf(model.rho)
    if method == "bessel" and not closed:
        raise RegimeViolation(
            "closed Bessel form requires the von Karman form with rho = inf"
        )
    if model.amplitude == 0:
        return 0.0
    r = float(np.linalg.norm(xvec))
    if method == "bessel" or (method == "auto" and closed):
        return _matern(model, r)
    breaks = model.breakpoints()
    if model.isotropic:
        return radial_fourier(_radial_density(model), r, model.dim + 1, breaks)
    z = float(xvec[0])
    transverse = float(np.linalg.norm(xvec[1:]))
    if model.form == SpectrumForm.CUSTOM:

        def slab(k: Any) -> Any:
            return np.vectorize(lambda kk: _custom_longitudinal(model, z, kk))(k)

        return radial_fourier(slab, transverse, model.dim, breaks)
    K = model.prefactor

    def power_slab(k: Any) -> Any:
        uv = _uv_factor(model, np.asarray(k) ** 2)
        return K * uv * _longitudinal_transform(model, z, k)

    return radial_fourier(power_slab, transverse, model.dim, breaks)


def _custom_longitudinal(model: SpectrumModel, z: float, k: float) -> float:
    f = lambda xi: float(_on_axis(model, xi, k))  # noqa: E731
    return 2 * kernel_integral(f, abs(z), 1, model.breakpoints())


def structure_function(model: SpectrumModel, r: float) -> float:
    """D_n(r) = 2 (B(0) - B(r)) by radial quadrature.

    Isotropic models use the full ``(d+1)``-dimensional radial form; models
    with a transverse cutoff are evaluated along a transverse separation.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if model.amplitude == 0 or r == 0:
        return 0.0
    if model.form == SpectrumForm.CUSTOM and not model.isotropic and model.dim > 1:
        raise DimensionError("structure_function (anisotropic custom)", model.dim, [1])
    breaks = model.breakpoints()
    if model.isotropic:
        return _radial_increment(_radial_density(model), r, model.dim + 1, breaks)
    return transverse_structure_function(model, r)


def transverse_structure_function(model: SpectrumModel, s: float) -> float:
    """2 ∫ Φ⊥(k)(1 - cos(k·x)) dk at transverse separation |x| = s."""
    if model.amplitude == 0 or s == 0:
        return 0.0
    marginal = lambda k: transverse_marginal(model, k)  # noqa: E731
    return _radial_increment(marginal, s, model.dim, model.breakpoints())


# White-noise objects -------------------------------------------------------


class TransverseSpectrum:
    """The effective white-noise transverse density Φ_eff(q) = 2π Φ(0, q)."""

    def __init__(self, model: SpectrumModel) -> None:
        self.model = model

    def radial(self, q: Any) -> np.ndarray:
        model = self.model
        q = np.abs(np.asarray(q, dtype=float))
        if model.form == SpectrumForm.CUSTOM:
            return 2 * math.pi * _on_axis(model, 0.0, q)
        with np.errstate(divide="ignore"):
            base = (model.eta**2 + q**2) ** (-model.exponent)
        return 2 * math.pi * model.prefactor * base * _uv_factor(model, q**2)

    def __call__(self, q: Any) -> np.ndarray:
        """Evaluate at transverse wavevectors of shape ``(..., d)``."""
        q = np.asarray(q, dtype=float)
        if self.model.form == SpectrumForm.CUSTOM:
            return 2 * math.pi * _custom(self.model, np.zeros(q.shape[:-1]), q)
        return self.radial(np.linalg.norm(q, axis=-1))

    def divergence(self, power: float) -> Optional[DivergentIntegralError]:
        """Power counting for ∫Φ_eff |q|^power dq; None when finite."""
        model = self.model
        if model.amplitude == 0 or model.form == SpectrumForm.CUSTOM:
            return None
        name = f"∫Φ_eff|q|^{power:g} dq"
        threshold = 2 * model.H + 1
        if model.eta == 0 and power <= threshold:
            return DivergentIntegralError(
                name,
                "infrared",
                f"eta > 0 or power > 2H+1 (H < {(power - 1) / 2:g})",
            )
        if math.isinf(model.rho) and power >= threshold:
            return DivergentIntegralError(
                name,
                "ultraviolet",
                f"rho < inf or power < 2H+1 (H > {(power - 1) / 2:g})",
            )
        if power >= threshold + 4:
            return DivergentIntegralError(name, "ultraviolet", "power < 2H+5")
        return None

    @property
    def second_moment_finite(self) -> bool:
        return self.divergence(2) is None

    def moment(self, power: float = 0) -> float:
        """∫Φ_eff(q)|q|^power dq over R^d."""
        error = self.divergence(power)
        if error is not None:
            raise error
        if self.model.amplitude == 0:
            return 0.0
        d = self.model.dim
        f = lambda q: self.radial(q) * np.asarray(q) ** (power + d - 1)  # noqa: E731
        value = sphere_area(d) * _half_line(f, self.model.breakpoints())
        if not math.isfinite(value):
            raise DivergentIntegralError(
                f"∫Φ_eff|q|^{power:g} dq", "unknown", "an integrable custom density"
            )
        return value

    def covariance(self, x: Any) -> float:
        """C_eff(x) = ∫ exp(iq·x) Φ_eff(q) dq."""
        error = self.divergence(0)
        if error is not None:
            raise error
        r = float(np.linalg.norm(np.atleast_1d(x)))
        return radial_fourier(self.radial, r, self.model.dim, self.model.breakpoints())


def transverse_spectrum(model: SpectrumModel) -> TransverseSpectrum:
    if model.form == SpectrumForm.CUSTOM and model.dim > 1:
        probe = np.eye(model.dim)
        values = _custom(model, np.zeros(model.dim), probe)
        if not np.allclose(values, values[0], rtol=1e-10, atol=0):
            raise DimensionError(
                "transverse_spectrum (anisotropic custom)", model.dim, [1]
            )
    return TransverseSpectrum(model)


@dataclass(frozen=True)
class DiffusionTensor:
    separation: np.ndarray
    value: np.ndarray
    origin: np.ndarray

    @property
    def trace_at_origin(self) -> float:
        return float(np.trace(self.origin))

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.value, ord=2))


def _require_second_moment(model: SpectrumModel) -> TransverseSpectrum:
    spectrum = transverse_spectrum(model)
    error = spectrum.divergence(2)
    if error is not None:
        raise RegimeViolation(
            "∫Φ_eff|q|² dq < ∞", f"{error.end} divergence; requires {error.condition}"
        )
    return spectrum


def diffusion_origin(model: SpectrumModel) -> np.ndarray:
    """D(0) = ∫Φ_eff(q) q⊗q dq."""
    spectrum = _require_second_moment(model)
    d = model.dim
    if model.form == SpectrumForm.CUSTOM and d == 1:
        return np.array([[spectrum.moment(2)]])
    return spectrum.moment(2) / d * np.eye(d)


def _diffusion_profiles(
    spectrum: TransverseSpectrum, r: float, epsabs: float, epsrel: float
) -> tuple[float, float]:
    """Longitudinal and transverse profiles a(r), b(r) of D(x)."""
    model = spectrum.model
    d = model.dim
    breaks = model.breakpoints()
    if d == 1:
        g = lambda q: spectrum.radial(q) * np.asarray(q) ** 2  # noqa: E731
        value = 2 * kernel_integral(g, r, 1, breaks, epsabs=epsabs, epsrel=epsrel)
        return value, value
    b = radial_fourier(spectrum.radial, r, d + 2, breaks, epsabs, epsrel)
    b /= 2 * math.pi
    if r == 0:
        return b, b
    c = radial_fourier(spectrum.radial, r, d + 4, breaks, epsabs, epsrel)
    return b - r**2 * c / (2 * math.pi) ** 2, b


def diffusion_tensor(
    model: SpectrumModel,
    x: Any,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
) -> DiffusionTensor:
    """D(x) = ∫ exp(iq·x) Φ_eff(q) q⊗q dq."""
    spectrum = _require_second_moment(model)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dim,):
        raise DimensionError("diffusion_tensor", x.shape[0], [model.dim])
    origin = diffusion_origin(model)
    r = float(np.linalg.norm(x))
    if r == 0:
        return DiffusionTensor(x, origin.copy(), origin)
    a, b = _diffusion_profiles(spectrum, r, epsabs, epsrel)
    unit = x / r
    outer = np.outer(unit, unit)
    value = a * outer + b * (np.eye(model.dim) - outer)
    return DiffusionTensor(x, value, origin)


def decay_radius(model: SpectrumModel, tolerance: float = 1e-6) -> float:
    """Radius beyond which ‖D(x)‖ stays below ``tolerance``·‖D(0)‖."""
    spectrum = _require_second_moment(model)
    origin = float(np.linalg.norm(diffusion_origin(model), ord=2))
    if origin == 0:
        return 0.0
    scale = model.eta if model.eta > 0 else 1.0 / 50
    radii = np.geomspace(0.05 / max(scale, 1.0), 200.0 / scale, 64)
    norms = np.array(
        [max(map(abs, _diffusion_profiles(spectrum, r, EPSABS, EPSREL))) for r in radii]
    )
    above = np.nonzero(norms >= tolerance * origin)[0]
    if len(above) == 0:
        return float(radii[0])
    if above[-1] == len(radii) - 1:
        logger.warning(
            "Diffusion tensor does not decay inside the scanned range",
            radius=float(radii[-1]),
        )
        return float(radii[-1])
    return float(radii[above[-1] + 1])


class DiffusionTable:
    """Spline table of D(x) for fast evaluation at many separations."""

    def __init__(
        self,
        model: SpectrumModel,
        radius: Optional[float] = None,
        samples: int = 257,
    ) -> None:
        self.model = model
        self.dim = model.dim
        self.origin = diffusion_origin(model)
        self.radius = decay_radius(model) if radius is None else radius
        spectrum = transverse_spectrum(model)
        if self.radius == 0 or not np.any(self.origin):
            self._a = self._b = None
            return
        inner = np.linspace(0, 1, samples // 2, endpoint=False) ** 2
        radii = np.concatenate(
            [
                inner * self.radius * 0.25,
                np.linspace(0.25, 1.0, samples - samples // 2) * self.radius,
            ]
        )
        profiles = np.array(
            [_diffusion_profiles(spectrum, r, EPSABS, EPSREL) for r in radii]
        )
        logger.debug("Built diffusion table", radius=self.radius, samples=samples)
        self._a = CubicSpline(radii, profiles[:, 0])
        self._b = CubicSpline(radii, profiles[:, 1])

    def __call__(self, separation: Any) -> np.ndarray:
        """D at separations of shape ``(..., d)``; returns ``(..., d, d)``."""
        separation = np.asarray(separation, dtype=float)
        d = self.dim
        out_shape = separation.shape[:-1] + (d, d)
        if self._a is None or self._b is None:
            return np.zeros(out_shape)
        r = np.linalg.norm(separation, axis=-1)
        inside = r <= self.radius
        clipped = np.minimum(r, self.radius)
        a = np.where(inside, self._a(clipped), 0.0)
        b = np.where(inside, self._b(clipped), 0.0)
        if d == 1:
            return a.reshape(out_shape)
        unit = separation / np.where(r > 0, r, 1.0)[..., None]
        safe = np.where(r[..., None] > 0, unit, 0.0)
        outer = safe[..., :, None] * safe[..., None, :]
        eye = np.broadcast_to(np.eye(d), out_shape)
        value = a[..., None, None] * outer + b[..., None, None] * (eye - outer)
        at_origin = r == 0
        if np.any(at_origin):
            value[at_origin] = self.origin
        return value
