"""Fundamental solutions psi (increasing) and phi (decreasing) of G_r u = 0."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import hyperu

from .diffusion import (
    Boundary,
    DiffusionSpec,
    ScaleSpeed,
    gbm_scale_speed,
    logistic_scale_speed,
    scale_density,
)
from .errors import DomainError, MonotonicityFailure, NotSupported, ODEFailure, ParamError
from .special import KummerParams, kummer_m, kummer_m_derivative


class PairSource(str, enum.Enum):
    ANALYTIC_GBM = "analytic_gbm"
    ANALYTIC_LOGISTIC = "analytic_logistic"
    USER_SUPPLIED = "user_supplied"
    NUMERIC_ODE = "numeric_ode"


Fn = Callable[[float], float]


@dataclass(frozen=True)
class FundamentalPair:
    """The minimal r-harmonic pair together with the scale density it uses.

    ``wronskian_B`` is the constant ``(psi' phi - phi' psi) / S'``.
    """

    psi: Fn
    phi: Fn
    psi_prime: Fn
    phi_prime: Fn
    wronskian_B: float
    source: PairSource
    scale: ScaleSpeed

    def s_prime(self, x):
        return self.scale.scale_density(x)

    def m_prime(self, x):
        return self.scale.speed_density(x)


def gbm_exponents(mu: float, sigma: float, r: float) -> tuple[float, float]:
    """Roots of ``sigma^2 k (k - 1) / 2 + mu k - r = 0`` as ``(k_plus, k_minus)``."""
    h = 0.5 - mu / sigma**2
    d = math.sqrt(h * h + 2.0 * r / sigma**2)
    return h + d, h - d


def make_gbm_pair(mu: float, sigma: float, r: float) -> FundamentalPair:
    """``psi = x^k_plus`` and ``phi = x^k_minus`` for geometric Brownian motion.

    Raises
    ------
    ParamError
        If ``mu >= r`` (then ``k_plus <= 1``) or a parameter is not positive.
    """
    if not (sigma > 0 and r > 0):
        raise ParamError("GBM pair needs sigma > 0 and r > 0")
    if mu >= r:
        raise ParamError(f"GBM pair needs mu < r, got mu={mu}, r={r}")
    kp, km = gbm_exponents(mu, sigma, r)
    scale = gbm_scale_speed(mu, sigma)
    return FundamentalPair(
        psi=lambda x: np.power(x, kp),
        phi=lambda x: np.power(x, km),
        psi_prime=lambda x: kp * np.power(x, kp - 1.0),
        phi_prime=lambda x: km * np.power(x, km - 1.0),
        wronskian_B=kp - km,
        source=PairSource.ANALYTIC_GBM,
        scale=scale,
    )


def make_logistic_pair(mu: float, gamma: float, sigma: float, r: float,
                       x_ref: float = 1.0) -> FundamentalPair:
    """Confluent hypergeometric pair of the logistic diffusion.

    ``psi(x) = x^k+ M(k+, 1 + k+ - k-, q x)`` and
    ``phi(x) = x^k- U(k-, 1 - k+ + k-, q x) / (x_ref^k- U(k-, 1 - k+ + k-, q x_ref))``
    with ``q = 2 mu gamma / sigma^2``. Kummer's ``M`` in place of Tricomi's
    ``U`` would add a multiple of psi and lose monotonicity; two-point
    quantities cannot tell the difference, but the law of the running minimum
    can.
    """
    if not (mu > 0 and sigma > 0 and r > 0 and gamma >= 0):
        raise ParamError("logistic pair needs mu, sigma, r > 0 and gamma >= 0")
    kp, km = gbm_exponents(mu, sigma, r)
    q = 2.0 * mu * gamma / sigma**2
    if q == 0.0:
        # M(., ., 0) = 1: the GBM powers, even when the second parameter is a pole
        return FundamentalPair(
            psi=lambda x: np.power(x, kp),
            phi=lambda x: np.power(x, km),
            psi_prime=lambda x: kp * np.power(x, kp - 1.0),
            phi_prime=lambda x: km * np.power(x, km - 1.0),
            wronskian_B=kp - km,
            source=PairSource.ANALYTIC_LOGISTIC,
            scale=logistic_scale_speed(mu, gamma, sigma),
        )
    up = KummerParams(kp, 1.0 + kp - km)
    dn = KummerParams(km, 1.0 - kp + km)

    def psi(x):
        return np.power(x, kp) * kummer_m(up, q * np.asarray(x, dtype=float))

    u_ref = x_ref**km * hyperu(km, dn.b, q * x_ref)

    def phi(x):
        return np.power(x, km) * hyperu(km, dn.b, q * np.asarray(x, dtype=float)) / u_ref

    def psi_prime(x):
        x = np.asarray(x, dtype=float)
        return (kp * np.power(x, kp - 1.0) * kummer_m(up, q * x)
                + q * np.power(x, kp) * kummer_m_derivative(up, q * x))

    def phi_prime(x):
        x = np.asarray(x, dtype=float)
        return (km * np.power(x, km - 1.0) * hyperu(km, dn.b, q * x)
                - q * km * np.power(x, km) * hyperu(km + 1.0, dn.b + 1.0, q * x)) / u_ref

    scale = logistic_scale_speed(mu, gamma, sigma)
    B = float((psi_prime(x_ref) * phi(x_ref) - phi_prime(x_ref) * psi(x_ref))
              / scale.scale_density(x_ref))
    return FundamentalPair(psi, phi, psi_prime, phi_prime, B,
                           PairSource.ANALYTIC_LOGISTIC, scale)


def make_user_pair(psi: Fn, phi: Fn, psi_prime: Fn, phi_prime: Fn,
                   scale: ScaleSpeed, x_ref: float) -> FundamentalPair:
    """Wrap user-supplied closed forms; ``B`` is evaluated at ``x_ref``."""
    B = float((psi_prime(x_ref) * phi(x_ref) - phi_prime(x_ref) * psi(x_ref))
              / scale.scale_density(x_ref))
    if not B > 0:
        raise ParamError("supplied pair has a non-positive Wronskian")
    return FundamentalPair(psi, phi, psi_prime, phi_prime, B, PairSource.USER_SUPPLIED, scale)


@dataclass(frozen=True)
class ODEConfig:
    """Truncation and tolerance settings for :func:`make_numeric_pair`.

    ``lower``/``upper`` are the truncation points used for natural or
    entrance boundaries; the pair is only defined on ``[lower, upper]``.
    """

    lower: float
    upper: float
    x_ref: float
    rtol: float = 1e-11
    atol: float = 1e-300
    method: str = "DOP853"
    check_points: int = 200


def second_derivative(u: Fn, u_prime: Fn, spec: DiffusionSpec, x):
    """``u''`` of an r-harmonic function read off the ODE itself."""
    x = np.asarray(x, dtype=float)
    return 2.0 * (spec.r * u(x) - spec.mu(x) * u_prime(x)) / spec.sigma(x) ** 2


def _local_rate(spec: DiffusionSpec, x: float, sign: int) -> float:
    # root of sigma^2 l^2 / 2 + mu l - r = 0 with frozen coefficients
    s2, m, r = spec.sigma(x) ** 2, spec.mu(x), spec.r
    d = math.sqrt(m * m + 2.0 * s2 * r)
    return (-m + sign * d) / s2


def _integrate_branch(spec, start, end, u0, w0, log_s0, cfg):
    r = spec.r

    def rhs(x, y):
        u, w, ls = y
        s = math.exp(ls)
        sig2 = spec.sigma(x) ** 2
        return [s * w, r * u * 2.0 / (sig2 * s), -2.0 * spec.mu(x) / sig2]

    sol = solve_ivp(rhs, (start, end), [u0, w0, log_s0], method=cfg.method,
                    rtol=cfg.rtol, atol=cfg.atol, dense_output=True)
    if not sol.success:
        raise ODEFailure(f"fundamental solution integration failed: {sol.message}")
    return sol.sol


def make_numeric_pair(spec: DiffusionSpec, solver_cfg: ODEConfig,
                      scale: ScaleSpeed | None = None) -> FundamentalPair:
    """Construct psi and phi by integrating ``(u, u'/S')`` across the interval.

    psi starts near ``a`` and phi near ``b``; each is normalised to 1 at
    ``x_ref``. Derivatives come from the integrator state, never from
    finite differences.

    Raises
    ------
    NotSupported
        For regular reflecting boundaries.
    ODEFailure
        If the integrator fails.
    MonotonicityFailure
        If psi is not increasing or phi not decreasing on the truncated range.
    """
    cfg = solver_cfg
    for bnd in (spec.boundary_a, spec.boundary_b):
        if bnd == Boundary.REGULAR_REFLECTED:
            raise NotSupported("reflecting boundaries are not supported by the ODE pair")
    if not (spec.a <= cfg.lower < cfg.x_ref < cfg.upper <= spec.b):
        raise DomainError("need a <= lower < x_ref < upper <= b")
    if scale is None:
        scale = scale_density(spec, cfg.x_ref)
    lo, hi = cfg.lower, cfg.upper
    absorbing = (Boundary.EXIT, Boundary.REGULAR_KILLED)

    def start_data(x0, sign, at_boundary):
        ls0 = math.log(float(scale.scale_density(x0)))
        if at_boundary:
            return 0.0, float(sign), ls0
        lam = _local_rate(spec, x0, sign)
        return 1.0, lam / math.exp(ls0), ls0

    # an absorbing end is modelled as a zero of the corresponding solution
    pinned_a = spec.boundary_a in absorbing
    pinned_b = spec.boundary_b in absorbing
    psi_sol = _integrate_branch(spec, lo, hi, *start_data(lo, +1, pinned_a), cfg)
    phi_sol = _integrate_branch(spec, hi, lo, *start_data(hi, -1, pinned_b), cfg)
    psi_ref = psi_sol(cfg.x_ref)[0]
    phi_ref = phi_sol(cfg.x_ref)[0]

    def guard(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"numeric pair evaluated outside [{lo}, {hi}]")
        return x

    def comp(sol, idx, norm):
        def f(x):
            xs = guard(x)
            if idx == 0:
                val = sol(xs)[0] / norm
            else:
                y = sol(xs)
                val = np.exp(y[2]) * y[1] / norm
            return float(val) if np.ndim(x) == 0 else val
        return f

    psi, psi_p = comp(psi_sol, 0, psi_ref), comp(psi_sol, 1, psi_ref)
    phi, phi_p = comp(phi_sol, 0, phi_ref), comp(phi_sol, 1, phi_ref)
    yr_psi, yr_phi = psi_sol(cfg.x_ref), phi_sol(cfg.x_ref)
    B = float(yr_psi[1] / psi_ref * yr_phi[0] / phi_ref - yr_phi[1] / phi_ref * yr_psi[0] / psi_ref)
    grid = np.linspace(lo, hi, cfg.check_points)[1:-1]
    if np.any(np.diff(psi(grid)) <= 0) or np.any(np.diff(phi(grid)) >= 0):
        raise MonotonicityFailure("numeric pair is not monotone; check the truncation points")
    return FundamentalPair(psi, phi, psi_p, phi_p, B, PairSource.NUMERIC_ODE, scale)


@dataclass(frozen=True)
class KilledSolutions:
    """Two-point solutions vanishing at one end of an interval.

    ``psi_hat(z, x) = psi(x) phi(z) - psi(z) phi(x)`` vanishes at ``z`` and
    increases; ``phi_hat(y, x) = phi(x) psi(y) - phi(y) psi(x)`` vanishes at
    ``y`` and decreases.
    """

    pair: FundamentalPair

    def psi_hat(self, z, x):
        p = self.pair
        return p.psi(x) * p.phi(z) - p.psi(z) * p.phi(x)

    def psi_hat_prime(self, z, x):
        p = self.pair
        return p.psi_prime(x) * p.phi(z) - p.psi(z) * p.phi_prime(x)

    def phi_hat(self, y, x):
        p = self.pair
        return p.phi(x) * p.psi(y) - p.phi(y) * p.psi(x)

    def phi_hat_prime(self, y, x):
        p = self.pair
        return p.phi_prime(x) * p.psi(y) - p.phi(y) * p.psi_prime(x)


def killed_solutions(pair: FundamentalPair) -> KilledSolutions:
    return KilledSolutions(pair)
