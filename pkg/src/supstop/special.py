"""Confluent hypergeometric function M(a, b, z) by its ascending series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParamError, SeriesDivergence

TERM_CAP = 10_000


@dataclass(frozen=True)
class KummerParams:
    """Parameters of ``M(a, b, .)`` and the target relative error."""

    a: float
    b: float
    precision: float = 1e-15

    def __post_init__(self):
        if self.b <= 0 and float(self.b).is_integer():
            raise ParamError(f"b = {self.b} is a pole of the Kummer series")
        if not self.precision > 0:
            raise ParamError("precision must be positive")


def _series_scalar(a: float, b: float, z: float, precision: float, cap: int) -> float:
    total, comp, term = 1.0, 0.0, 1.0
    n_min = int(max(abs(a), abs(b))) + 2
    for n in range(cap):
        term *= (a + n) / (b + n) * z / (n + 1)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if term == 0.0 or (n >= n_min and abs(term) <= precision * abs(total)):
            return total
    raise SeriesDivergence(f"M({a}, {b}, z) did not converge in {cap} terms")


def _series(a: float, b: float, z: np.ndarray, precision: float, cap: int) -> np.ndarray:
    """Kahan-compensated ascending series for non-negative ``z``."""
    total = np.ones_like(z)
    comp = np.zeros_like(z)
    term = np.ones_like(z)
    # keep summing at least past the index where (a)_n/(b)_n can turn around
    n_min = int(max(abs(a), abs(b))) + 2
    active = np.ones(z.shape, dtype=bool)
    for n in range(cap):
        term = term * ((a + n) / (b + n)) * z / (n + 1)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = np.where(active, t, total)
        comp = np.where(active, comp, 0.0)
        if n >= n_min:
            small = np.abs(term) <= precision * np.abs(total)
            active &= ~small
            if not active.any():
                return total
        if a + n == 0:  # terminating polynomial
            return total
    raise SeriesDivergence(f"M({a}, {b}, z) did not converge in {cap} terms")


def kummer_m(params: KummerParams, z, cap: int = TERM_CAP):
    """Evaluate ``M(a, b, z) = sum (a)_n z^n / ((b)_n n!)``.

    Negative arguments use ``M(a, b, z) = e^z M(b - a, b, -z)`` so that the
    summed series never alternates in sign from ``z``.

    Parameters
    ----------
    params : KummerParams
    z : float or array_like
    cap : int
        Maximum number of series terms.

    Returns
    -------
    float or ndarray
    """
    scalar = np.ndim(z) == 0
    a, b, eps = params.a, params.b, params.precision
    if scalar:
        z = float(z)
        if not math.isfinite(z):
            raise ParamError("Kummer argument must be finite")
        if z >= 0:
            return _series_scalar(a, b, z, eps, cap)
        return math.exp(z) * _series_scalar(b - a, b, -z, eps, cap)
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(zz)):
        raise ParamError("Kummer argument must be finite")
    out = np.empty_like(zz)
    pos = zz >= 0
    if pos.any():
        out[pos] = _series(a, b, zz[pos], eps, cap)
    if (~pos).any():
        zn = zz[~pos]
        out[~pos] = np.exp(zn) * _series(b - a, b, -zn, eps, cap)
    return float(out[0]) if scalar else out


def kummer_m_derivative(params: KummerParams, z, cap: int = TERM_CAP):
    """``dM/dz = (a / b) M(a + 1, b + 1, z)``."""
    a, b = params.a, params.b
    if a == 0:
        return 0.0 if np.ndim(z) == 0 else np.zeros(np.shape(z))
    shifted = KummerParams(a + 1.0, b + 1.0, params.precision)
    return (a / b) * kummer_m(shifted, z, cap)

