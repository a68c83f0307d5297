"""Exercise payoffs with explicit kink bookkeeping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ParamError
from .quadrature import AnchoredIntegral, integrate


class PayoffKind(str, enum.Enum):
    CALL = "call"
    CAPPED_CALL = "capped_call"
    STRADDLE = "straddle"
    CAPPED_STRADDLE = "capped_straddle"
    MAX_WITH_FLOOR = "max_with_floor"
    RESOLVENT = "resolvent"
    CUSTOM = "custom"


class Side(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


Fn = Callable[[float], float]


@dataclass(frozen=True)
class Payoff:
    """Continuous payoff ``g``, smooth off the finite kink set ``kinks``.

    Off the kinks both derivative callables return the ordinary derivative;
    at a kink they return the one-sided limits.
    """

    g: Fn
    kinks: tuple[float, ...]
    g_prime_left: Fn
    g_prime_right: Fn
    g_second: Fn
    kind: PayoffKind = PayoffKind.CUSTOM
    params: dict = field(default_factory=dict)

    def g_prime(self, x: float, side: Side = Side.RIGHT) -> float:
        return self.g_prime_right(x) if side == Side.RIGHT else self.g_prime_left(x)

    def derivative_jump(self, k: float) -> float:
        """``g'(k+) - g'(k-)``; positive at convex kinks."""
        return float(self.g_prime_right(k) - self.g_prime_left(k))

    def kinks_in(self, lo: float, hi: float) -> list[float]:
        return [k for k in self.kinks if lo < k < hi]

    def scaled(self, c: float) -> "Payoff":
        """The payoff ``c * g`` with the same kink set."""
        g, gl, gr, g2 = self.g, self.g_prime_left, self.g_prime_right, self.g_second
        return Payoff(lambda x: c * g(x), self.kinks, lambda x: c * gl(x),
                      lambda x: c * gr(x), lambda x: c * g2(x), self.kind,
                      {**self.params, "scale": c * self.params.get("scale", 1.0)})


def _piecewise_linear(breaks: Sequence[float], slopes: Sequence[float], value0: float,
                      kind: PayoffKind, params: dict) -> Payoff:
    """Continuous piecewise-linear payoff.

    ``slopes[j]`` holds on the j-th piece between consecutive ``breaks``;
    ``value0`` is the value at ``breaks[0]``.
    """
    bk = np.asarray(breaks, dtype=float)
    sl = np.asarray(slopes, dtype=float)
    knot_vals = value0 + np.concatenate(([0.0], np.cumsum(sl[1:-1] * np.diff(bk))))

    def g(x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(bk, x, side="right") - 1, 0, len(bk) - 1)
        below = x < bk[0]
        out = np.where(below, value0 + sl[0] * (x - bk[0]), knot_vals[j] + sl[j + 1] * (x - bk[j]))
        return float(out) if out.ndim == 0 else out

    def gp_right(x):
        j = np.searchsorted(bk, np.asarray(x, dtype=float), side="right")
        out = sl[j]
        return float(out) if np.ndim(out) == 0 else out

    def gp_left(x):
        j = np.searchsorted(bk, np.asarray(x, dtype=float), side="left")
        out = sl[j]
        return float(out) if np.ndim(out) == 0 else out

    def g2(x):
        return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))

    return Payoff(g, tuple(float(b) for b in bk), gp_left, gp_right, g2, kind, params)


def linear_payoff(strike: float) -> Payoff:
    """``g(x) = x - K`` (a call without the positive part; no kinks)."""
    return Payoff(
        lambda x: np.asarray(x, dtype=float) - strike if np.ndim(x) else x - strike,
        (),
        lambda x: 1.0 + 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 1.0,
        lambda x: 1.0 + 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 1.0,
        lambda x: 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 0.0,
        PayoffKind.CALL,
        {"strike": strike},
    )


def call_payoff(strike: float) -> Payoff:
    """``g(x) = (x - K)^+``."""
    return _piecewise_linear([strike], [0.0, 1.0], 0.0, PayoffKind.CALL, {"strike": strike})


def capped_call_payoff(strike: float, cap: float) -> Payoff:
    """``g(x) = min((x - K)^+, C)``; kinks at ``K`` and ``K + C``."""
    if cap <= 0:
        raise ParamError("cap must be positive")
    return _piecewise_linear([strike, strike + cap], [0.0, 1.0, 0.0], 0.0,
                             PayoffKind.CAPPED_CALL, {"strike": strike, "cap": cap})


def straddle_payoff(strike: float) -> Payoff:
    """``g(x) = |x - K|``."""
    return _piecewise_linear([strike], [-1.0, 1.0], 0.0, PayoffKind.STRADDLE, {"strike": strike})


def capped_straddle_payoff(strike: float, cap: float) -> Payoff:
    """``g(x) = min(|x - K|, C)``; kinks at ``K - C``, ``K``, ``K + C``."""
    return asym_capped_straddle_payoff(strike, cap, cap, kind=PayoffKind.CAPPED_STRADDLE)


def asym_capped_straddle_payoff(strike: float, cap_low: float, cap_high: float,
                                kind: PayoffKind = PayoffKind.CAPPED_STRADDLE) -> Payoff:
    """``g(x) = min((K - x)^+, C1) + min((x - K)^+, C2)``."""
    if not (cap_low > 0 and cap_high > 0):
        raise ParamError("caps must be positive")
    return _piecewise_linear(
        [strike - cap_low, strike, strike + cap_high],
        [0.0, -1.0, 1.0, 0.0],
        cap_low,
        kind,
        {"strike": strike, "cap_low": cap_low, "cap_high": cap_high},
    )


def max_with_floor_payoff(floor: float) -> Payoff:
    """``g(x) = max(x, c)``, the minimum-guaranteed-payment payoff."""
    return _piecewise_linear([floor], [0.0, 1.0], floor, PayoffKind.MAX_WITH_FLOOR, {"floor": floor})


def constant_payoff(value: float) -> Payoff:
    zero = lambda x: 0.0 * np.asarray(x, dtype=float) if np.ndim(x) else 0.0
    return Payoff(lambda x: value + zero(x), (), zero, zero, zero, PayoffKind.CUSTOM,
                  {"value": value})


def custom_payoff(g: Fn, g_prime_left: Fn, g_prime_right: Fn, g_second: Fn,
                  kinks: Sequence[float] = ()) -> Payoff:
    """Wrap user-supplied payoff pieces; every field must be given."""
    return Payoff(g, tuple(sorted(float(k) for k in kinks)), g_prime_left, g_prime_right,
                  g_second, PayoffKind.CUSTOM, {})


def check_continuity(payoff: Payoff, tol: float = 1e-12) -> list[float]:
    """Kinks where ``|g(k-) - g(k+)|`` exceeds ``tol`` (probed at ``k -+ 1e-9``)."""
    bad = []
    for k in payoff.kinks:
        h = 1e-9 * max(1.0, abs(k))
        gl, gr = payoff.g(k - h), payoff.g(k + h)
        slope = max(abs(payoff.g_prime_left(k)), abs(payoff.g_prime_right(k)), 1.0)
        if abs(gl - gr) > tol + 2 * h * slope:
            bad.append(k)
        if not (math.isfinite(payoff.g_prime_left(k)) and math.isfinite(payoff.g_prime_right(k))):
            bad.append(k)
    return bad


def resolvent_payoff(pi: Fn, pair, spec) -> Payoff:
    """The payoff ``g = R_r pi`` built from the Green kernel.

    ``g = (phi I1 + psi I2) / B`` with ``I1(x) = int_a^x psi pi m'`` and
    ``I2(x) = int_x^b phi pi m'``; ``g'`` uses the same integrals with
    ``psi'`` and ``phi'``, and ``g''`` is assembled from the second
    derivatives of the pair.
    """
    from .fundamental import second_derivative

    a, b = spec.interval
    B = pair.wronskian_B
    lower_f = lambda t: pair.psi(t) * pi(t) * pair.m_prime(t)
    upper_f = lambda t: pair.phi(t) * pi(t) * pair.m_prime(t)
    # I1 accumulates upward from a and I2 downward from b: both are small near
    # their own endpoint, where differencing from an interior node would cancel
    i1 = AnchoredIntegral(lower_f, a, 0.0, epsrel=1e-10, direction="up")
    i2_rev = AnchoredIntegral(upper_f, b, 0.0, epsrel=1e-10, direction="down")

    def parts(x):
        return i1(x), -i2_rev(x)

    def g(x):
        if np.ndim(x):
            return np.array([g(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        p, q = parts(x)
        return (pair.phi(x) * p + pair.psi(x) * q) / B

    def gp(x):
        if np.ndim(x):
            return np.array([gp(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        p, q = parts(x)
        return (pair.phi_prime(x) * p + pair.psi_prime(x) * q) / B

    def g2(x):
        if np.ndim(x):
            return np.array([g2(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        p, q = parts(x)
        phi2 = second_derivative(pair.phi, pair.phi_prime, spec, x)
        psi2 = second_derivative(pair.psi, pair.psi_prime, spec, x)
        # the boundary terms of differentiating the integrals give -2 pi / sigma^2
        return float((phi2 * p + psi2 * q) / B - 2.0 * pi(x) / spec.sigma(x) ** 2)

    return Payoff(g, (), gp, gp, g2, PayoffKind.RESOLVENT, {"pi": pi})
