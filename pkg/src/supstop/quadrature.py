"""Adaptive quadrature with breakpoint splitting and infinite-endpoint maps."""

from __future__ import annotations

import bisect
import math
import threading
import warnings
from typing import Callable, Iterable

from scipy import integrate as _integrate

from .errors import DomainError, QuadratureFailure

EPSABS = 1e-10
EPSREL = 1e-9
ROUNDOFF_SLACK = 100.0


def _finite_piece(f, lo, hi, epsabs, epsrel, limit):
    # a roundoff diagnosis is tolerated when the error estimate stays within
    # ROUNDOFF_SLACK times the request, measured against int |f| because a
    # cancelling integrand cannot be resolved relative to its small net value;
    # any other warning is a failure
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", _integrate.IntegrationWarning)
        val, err = _integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit)
    for w in caught:
        msg = str(w.message)
        if "roundoff" not in msg:
            raise QuadratureFailure(f"quadrature on [{lo}, {hi}] did not converge: {msg}")
        scale = abs(val)
        if err > ROUNDOFF_SLACK * max(epsabs, epsrel * scale):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", _integrate.IntegrationWarning)
                scale = max(scale, _integrate.quad(lambda t: abs(f(t)), lo, hi, epsrel=1e-6,
                                                   limit=limit)[0])
        if err > ROUNDOFF_SLACK * max(epsabs, epsrel * scale):
            raise QuadratureFailure(f"quadrature on [{lo}, {hi}] did not converge: {msg}")
    if not math.isfinite(val):
        raise QuadratureFailure(f"non-finite integral on [{lo}, {hi}]")
    return val, err


def _semi_infinite(f, c, direction, epsabs, epsrel, limit):
    # x = c + direction * s (1/t - 1) maps t in (0, 1] onto [c, +-inf); the
    # scale s = max(1, |c|) keeps the mass of power-law tails away from t = 0
    s = max(1.0, abs(c))

    def g(t):
        if t <= 0.0:
            return 0.0
        x = c + direction * s * (1.0 / t - 1.0)
        return s * f(x) / (t * t)

    return _finite_piece(g, 0.0, 1.0, epsabs, epsrel, limit)


def _decade_split(nodes: list[float]) -> list[float]:
    # pieces spanning several decades of a positive range are split per decade
    out = [nodes[0]]
    for a, b in zip(nodes[:-1], nodes[1:]):
        if math.isfinite(a) and math.isfinite(b) and a > 0 and b / a > 10.0:
            k0, k1 = math.floor(math.log10(a)) + 1, math.ceil(math.log10(b)) - 1
            out.extend(10.0**k for k in range(k0, k1 + 1) if a < 10.0**k < b)
        out.append(b)
    return out


def integrate(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    breaks: Iterable[float] = (),
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
    limit: int = 200,
) -> float:
    """Integrate ``f`` over ``[lo, hi]``, splitting at interior breakpoints.

    Infinite endpoints are handled by the substitution ``t = s/(s + |x - c|)``
    with ``s = max(1, |c|)`` on the unbounded piece. A reversed interval
    returns the negated integral.

    Raises
    ------
    QuadratureFailure
        If any piece fails to converge or produces a non-finite value.
    """
    if lo == hi:
        return 0.0
    if lo > hi:
        return -integrate(f, hi, lo, breaks, epsabs, epsrel, limit)
    pts = sorted({b for b in breaks if lo < b < hi and math.isfinite(b)})
    if math.isinf(lo) and math.isinf(hi) and not pts:
        pts = [0.0]
    nodes = _decade_split([lo] + pts + [hi])
    total = 0.0
    n_pieces = len(nodes) - 1
    for k in range(n_pieces):
        a, b = nodes[k], nodes[k + 1]
        if a == b:
            continue
        tol_abs = epsabs / max(1, n_pieces)
        if math.isinf(a):
            val, _ = _semi_infinite(f, b, -1.0, tol_abs, epsrel, limit)
        elif math.isinf(b):
            val, _ = _semi_infinite(f, a, 1.0, tol_abs, epsrel, limit)
        else:
            val, _ = _finite_piece(f, a, b, tol_abs, epsrel, limit)
        total += val
    return total


class AnchoredIntegral:
    """Memoized ``x -> value0 + int_anchor^x f``.

    Every evaluated point becomes a cache node, and new queries integrate
    only from the nearest node. With ``direction="up"`` the nearest node at
    or below ``x`` is used (the anchor must lie below every query), with
    ``"down"`` the nearest one at or above; accumulating away from an
    endpoint avoids cancellation where the integral is small there.
    Thread-safe.
    """

    def __init__(self, f: Callable[[float], float], anchor: float, value0: float = 0.0,
                 breaks: Iterable[float] = (), epsabs: float = 1e-12, epsrel: float = 1e-12,
                 direction: str = "nearest"):
        if direction not in ("nearest", "up", "down"):
            raise ValueError("direction must be 'nearest', 'up' or 'down'")
        self._direction = direction
        self._f = f
        self._nodes = [anchor]
        self._vals = [value0]
        self._breaks = tuple(breaks)
        self._lock = threading.Lock()
        self._epsabs, self._epsrel = epsabs, epsrel

    def __call__(self, x: float) -> float:
        with self._lock:
            k = bisect.bisect_left(self._nodes, x)
            if k < len(self._nodes) and self._nodes[k] == x:
                return self._vals[k]
            cands = {"nearest": (k - 1, k), "up": (k - 1,), "down": (k,)}[self._direction]
            cands = [j for j in cands if 0 <= j < len(self._nodes)]
            if not cands:
                raise DomainError(f"{x} lies on the wrong side of the anchor {self._nodes[0]}")
            j = min(cands, key=lambda j: abs(self._nodes[j] - x))
            x0, v0 = self._nodes[j], self._vals[j]
        val = v0 + integrate(self._f, x0, x, self._breaks, self._epsabs, self._epsrel)
        with self._lock:
            k = bisect.bisect_left(self._nodes, x)
            if k == len(self._nodes) or self._nodes[k] != x:
                self._nodes.insert(k, x)
                self._vals.insert(k, val)
        return val
