"""Diffusion specifications and the scale/speed machinery."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ParamError
from .quadrature import AnchoredIntegral


class Boundary(str, enum.Enum):
    NATURAL = "natural"
    ENTRANCE = "entrance"
    EXIT = "exit"
    REGULAR_KILLED = "regular_killed"
    REGULAR_REFLECTED = "regular_reflected"


@dataclass(frozen=True)
class DiffusionSpec:
    """A regular linear diffusion ``dX = mu(X) dt + sigma(X) dW`` on ``(a, b)``.

    ``family`` and ``params`` are optional metadata that let downstream code
    pick closed forms (exact GBM stepping, analytic fundamental pairs).
    """

    mu: Callable[[float], float]
    sigma: Callable[[float], float]
    interval: tuple[float, float]
    r: float
    boundary_a: Boundary = Boundary.NATURAL
    boundary_b: Boundary = Boundary.NATURAL
    family: str | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        a, b = self.interval
        if not a < b:
            raise ParamError(f"empty interval ({a}, {b})")
        if not self.r > 0:
            raise ParamError(f"discount rate must be positive, got {self.r}")

    @property
    def a(self) -> float:
        return self.interval[0]

    @property
    def b(self) -> float:
        return self.interval[1]

    def contains(self, x: float) -> bool:
        return self.a < x < self.b


def gbm_spec(mu: float, sigma: float, r: float) -> DiffusionSpec:
    """Geometric Brownian motion on ``(0, inf)``."""
    if sigma <= 0:
        raise ParamError("sigma must be positive")
    return DiffusionSpec(
        mu=lambda x: mu * x,
        sigma=lambda x: sigma * x,
        interval=(0.0, math.inf),
        r=r,
        family="gbm",
        params={"mu": mu, "sigma": sigma},
    )


def logistic_spec(mu: float, gamma: float, sigma: float, r: float) -> DiffusionSpec:
    """Logistic diffusion ``dX = mu X (1 - gamma X) dt + sigma X dW``."""
    if sigma <= 0 or mu <= 0 or gamma < 0:
        raise ParamError("logistic diffusion needs mu > 0, sigma > 0, gamma >= 0")
    return DiffusionSpec(
        mu=lambda x: mu * x * (1.0 - gamma * x),
        sigma=lambda x: sigma * x,
        interval=(0.0, math.inf),
        r=r,
        family="logistic",
        params={"mu": mu, "gamma": gamma, "sigma": sigma},
    )


def drifted_bm_spec(mu0: float, sigma0: float, r: float) -> DiffusionSpec:
    """Brownian motion with constant drift on the whole real line."""
    if sigma0 <= 0:
        raise ParamError("sigma must be positive")
    return DiffusionSpec(
        mu=lambda x: mu0 + 0.0 * x,
        sigma=lambda x: sigma0 + 0.0 * x,
        interval=(-math.inf, math.inf),
        r=r,
        family="bm",
        params={"mu": mu0, "sigma": sigma0},
    )


@dataclass(frozen=True)
class ScaleSpeed:
    """Scale density ``S'`` and speed density ``m' = 2 / (sigma^2 S')``."""

    scale_density: Callable[[float], float]
    speed_density: Callable[[float], float]
    scale_anchor: float

    def rescaled(self, factor: float) -> "ScaleSpeed":
        """Multiply ``S'`` by ``factor`` (and divide ``m'`` by it)."""
        s, m = self.scale_density, self.speed_density
        return ScaleSpeed(lambda x: factor * s(x), lambda x: m(x) / factor, self.scale_anchor)


def _vectorize(fn):
    def wrapped(x):
        if np.ndim(x) == 0:
            return fn(float(x))
        arr = np.asarray(x, dtype=float)
        return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)

    return wrapped


def scale_density(spec: DiffusionSpec, anchor: float) -> ScaleSpeed:
    """Build ``S'`` by adaptive quadrature of ``2 mu / sigma^2`` from ``anchor``.

    ``S'(anchor) = 1`` and ``m'`` follows from ``m' = 2 / (sigma^2 S')``.

    Raises
    ------
    DomainError
        If ``anchor`` lies outside the open state interval.
    """
    if not spec.contains(anchor):
        raise DomainError(f"anchor {anchor} outside {spec.interval}")
    rate = lambda t: -2.0 * spec.mu(t) / spec.sigma(t) ** 2
    log_s = AnchoredIntegral(rate, anchor)

    def s_prime(x: float) -> float:
        return math.exp(log_s(x))

    def m_prime(x: float) -> float:
        return 2.0 / (spec.sigma(x) ** 2 * math.exp(log_s(x)))

    return ScaleSpeed(_vectorize(s_prime), _vectorize(m_prime), anchor)


def gbm_scale_speed(mu: float, sigma: float) -> ScaleSpeed:
    """Closed-form ``S'(x) = x^(-2 mu / sigma^2)`` anchored at 1."""
    p = 2.0 * mu / sigma**2
    return ScaleSpeed(
        lambda x: np.power(x, -p),
        lambda x: 2.0 / (sigma**2 * np.power(x, 2.0 - p)),
        1.0,
    )


def logistic_scale_speed(mu: float, gamma: float, sigma: float) -> ScaleSpeed:
    """Closed-form scale density of the logistic diffusion anchored at 1."""
    p = 2.0 * mu / sigma**2
    q = p * gamma

    def s(x):
        return np.power(x, -p) * np.exp(q * (x - 1.0))

    return ScaleSpeed(s, lambda x: 2.0 / (sigma**2 * x * x * s(x)), 1.0)


def drifted_bm_scale_speed(mu0: float, sigma0: float) -> ScaleSpeed:
    p = 2.0 * mu0 / sigma0**2
    return ScaleSpeed(
        lambda x: np.exp(-p * x),
        lambda x: 2.0 / (sigma0**2) * np.exp(p * x),
        0.0,
    )


@dataclass
class ValidationReport:
    """Findings of :func:`validate_spec`; never raised."""

    sigma_violations: list[float] = field(default_factory=list)
    nonfinite_mu: list[float] = field(default_factory=list)
    nonfinite_sigma: list[float] = field(default_factory=list)
    outside_interval: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.sigma_violations or self.nonfinite_mu or self.nonfinite_sigma
                    or self.outside_interval)


def validate_spec(spec: DiffusionSpec, grid: Sequence[float]) -> ValidationReport:
    """Check finiteness of the coefficients and positivity of sigma on ``grid``."""
    report = ValidationReport()
    for x in grid:
        x = float(x)
        if not spec.contains(x):
            report.outside_interval.append(x)
            continue
        with np.errstate(all="ignore"):
            try:
                m = float(spec.mu(x))
            except (ZeroDivisionError, OverflowError, ValueError):
                m = math.nan
            try:
                s = float(spec.sigma(x))
            except (ZeroDivisionError, OverflowError, ValueError):
                s = math.nan
        if not math.isfinite(m):
            report.nonfinite_mu.append(x)
        if not math.isfinite(s):
            report.nonfinite_sigma.append(x)
        elif s <= 0:
            report.sigma_violations.append(x)
    return report
