"""Laws of the running extrema at an independent exponential time, and the
conditional laws of the killed process given its extremum."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .diffusion import DiffusionSpec
from .errors import DomainError
from .functionals import measure_integral
from .fundamental import FundamentalPair, KilledSolutions
from .payoffs import Payoff
from .quadrature import integrate


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DomainError(msg)


def sup_cdf(pair: FundamentalPair, x: float, m: float) -> float:
    """``P_x(M_T <= m) = 1 - psi(x) / psi(m)`` for ``x <= m``."""
    _require(x <= m, f"need x <= m, got x={x}, m={m}")
    if math.isinf(m):
        return 1.0
    return float(1.0 - pair.psi(x) / pair.psi(m))


def inf_cdf(pair: FundamentalPair, x: float, i: float) -> float:
    """``P_x(I_T <= i) = phi(x) / phi(i)`` for ``i <= x``."""
    _require(i <= x, f"need i <= x, got i={i}, x={x}")
    if math.isinf(i):
        return 0.0
    return float(pair.phi(x) / pair.phi(i))


def interior_survival(pair: FundamentalPair, x: float, i: float, m: float) -> float:
    """``P_x(I_T >= i, M_T <= m)``: the process stays in ``[i, m]`` up to ``T``."""
    _require(i < x < m, f"need i < x < m, got ({i}, {x}, {m})")
    k = KilledSolutions(pair)
    return float(1.0 - k.phi_hat(m, x) / k.phi_hat(m, i) - k.psi_hat(i, x) / k.psi_hat(i, m))


def joint_cdf(pair: FundamentalPair, x: float, i: float, m: float) -> float:
    """``P_x(I_T <= i, M_T <= m)``.

    Interior points use the three-term expression; ``i = x`` reduces to the
    sup marginal and an infinite ``m`` to the inf marginal.
    """
    _require(i <= x <= m, f"need i <= x <= m, got ({i}, {x}, {m})")
    if x == m:
        return 0.0
    if i == x:
        return sup_cdf(pair, x, m)
    if math.isinf(m):
        return inf_cdf(pair, x, i)
    k = KilledSolutions(pair)
    return float(-pair.psi(x) / pair.psi(m) + k.phi_hat(m, x) / k.phi_hat(m, i)
                 + k.psi_hat(i, x) / k.psi_hat(i, m))


def inf_density_capped(pair: FundamentalPair, x: float, i: float, m: float) -> float:
    """Density of ``P_x(I_T in di, M_T <= m)`` in ``i``, for ``i < x < m``."""
    _require(i < x < m, f"need i < x < m, got ({i}, {x}, {m})")
    k = KilledSolutions(pair)
    ph = k.phi_hat(m, i)
    num = -pair.wronskian_B * pair.s_prime(i) - k.phi_hat_prime(m, i)
    return float(num / ph**2 * k.phi_hat(m, x))


def sup_density_floored(pair: FundamentalPair, x: float, i: float, m: float) -> float:
    """Density of ``P_x(I_T >= i, M_T in dm)`` in ``m``, for ``i < x < m``."""
    _require(i < x < m, f"need i < x < m, got ({i}, {x}, {m})")
    k = KilledSolutions(pair)
    ps = k.psi_hat(i, m)
    num = -pair.wronskian_B * pair.s_prime(m) + k.psi_hat_prime(i, m)
    return float(num / ps**2 * k.psi_hat(i, x))


@dataclass(frozen=True)
class ExtremalLaw:
    """The extremal law of a diffusion with fundamental pair ``pair``."""

    pair: FundamentalPair

    def sup_cdf(self, x: float, m: float) -> float:
        return sup_cdf(self.pair, x, m)

    def inf_cdf(self, x: float, i: float) -> float:
        return inf_cdf(self.pair, x, i)

    def joint_cdf(self, x: float, i: float, m: float) -> float:
        return joint_cdf(self.pair, x, i, m)

    def interior_survival(self, x: float, i: float, m: float) -> float:
        return interior_survival(self.pair, x, i, m)

    def inf_density(self, x: float, i: float, m: float) -> float:
        return inf_density_capped(self.pair, x, i, m)

    def sup_density(self, x: float, i: float, m: float) -> float:
        return sup_density_floored(self.pair, x, i, m)


# ---------------------------------------------------------------------------
# conditional laws of the killed process

def sup_normalizer(pair: FundamentalPair, i: float, v: float) -> float:
    """``psi_hat_i'(v) / S'(v) - B``, equal to ``r int_i^v psi_hat_i m'``."""
    k = KilledSolutions(pair)
    return float(k.psi_hat_prime(i, v) / pair.s_prime(v) - pair.wronskian_B)


def inf_normalizer(pair: FundamentalPair, i: float, v: float) -> float:
    """``-B - phi_hat_v'(i) / S'(i)``, equal to ``r int_i^v phi_hat_v m'``."""
    k = KilledSolutions(pair)
    return float(-pair.wronskian_B - k.phi_hat_prime(v, i) / pair.s_prime(i))


def conditional_density_given_sup(pair: FundamentalPair, spec: DiffusionSpec, i: float, v: float,
                                  y: float) -> float:
    """Density at ``y`` of the process killed below ``i`` at ``T``, given its maximum is ``v``."""
    _require(i < y < v, f"need i < y < v, got ({i}, {y}, {v})")
    k = KilledSolutions(pair)
    return float(spec.r * k.psi_hat(i, y) * pair.m_prime(y) / sup_normalizer(pair, i, v))


def conditional_density_given_inf(pair: FundamentalPair, spec: DiffusionSpec, i: float, v: float,
                                  y: float) -> float:
    """Density at ``y`` of the process killed above ``v`` at ``T``, given its minimum is ``i``."""
    _require(i < y < v, f"need i < y < v, got ({i}, {y}, {v})")
    k = KilledSolutions(pair)
    return float(spec.r * k.phi_hat(v, y) * pair.m_prime(y) / inf_normalizer(pair, i, v))


def conditional_expectation(h: Callable[[float], float], pair: FundamentalPair, i: float,
                            v: float, given: str = "sup", breaks=()) -> float:
    """``E[h(X_T) | extremum]`` as a ratio of speed-measure integrals.

    ``given="sup"`` conditions the process killed at ``i`` on its maximum
    ``v``; ``given="inf"`` the process killed at ``v`` on its minimum ``i``.
    """
    _require(i < v, f"need i < v, got ({i}, {v})")
    w = _weight(pair, i, v, given)
    num = integrate(lambda t: h(t) * w(t) * pair.m_prime(t), i, v, list(breaks))
    den = integrate(lambda t: w(t) * pair.m_prime(t), i, v)
    return float(num / den)


def generator_conditional_expectation(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec,
                                      i: float, v: float, given: str = "sup") -> float:
    """``E[(G_r g)(X_T) | extremum]`` with kink atoms of the generator measure included.

    Divided by ``-r`` this is the two-point ratio: with ``given="sup"`` the
    upper representation value at ``v`` for the lower point ``i``, with
    ``given="inf"`` the lower one at ``i`` for the upper point ``v``.
    """
    _require(i < v, f"need i < v, got ({i}, {v})")
    w = _weight(pair, i, v, given)
    num = measure_integral(payoff, spec, pair, w, i, v, epsabs=1e-13, epsrel=1e-11)
    den = integrate(lambda t: w(t) * pair.m_prime(t), i, v, epsabs=1e-14, epsrel=1e-11)
    return float(num / den)


def _weight(pair: FundamentalPair, i: float, v: float, given: str):
    k = KilledSolutions(pair)
    if given == "sup":
        return lambda t: k.psi_hat(i, t)
    if given == "inf":
        return lambda t: k.phi_hat(v, t)
    raise ValueError("given must be 'sup' or 'inf'")
