"""Piecewise-monotone tabulated curves with explicit jump bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import DomainError


@dataclass
class TabulatedCurve:
    """Curve given by nodes, interpolated piecewise between jumps.

    A repeated abscissa marks a jump: the first of the two ordinates is the
    left limit, the second the right limit. ``continuity`` decides which one
    is the value at the jump. ``method`` is ``"pchip"`` (shape preserving)
    or ``"spline"`` (not-a-knot cubic, fourth order on smooth pieces).
    Outside ``[x[0], x[-1]]`` the optional ``tail`` callable is used above
    the last node and ``below`` under the first; otherwise evaluation raises
    :class:`DomainError`.
    """

    x: np.ndarray
    y: np.ndarray
    continuity: str = "left"
    tail: Callable[[float], float] | None = None
    below: float | None = None
    method: str = "pchip"
    _pieces: list = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1 or len(self.x) == 0:
            raise ValueError("nodes must be matching non-empty 1-d arrays")
        if np.any(np.diff(self.x) < 0):
            raise ValueError("abscissae must be non-decreasing")
        if self.method not in ("pchip", "spline"):
            raise ValueError("method must be 'pchip' or 'spline'")
        if self.continuity not in ("left", "right"):
            raise ValueError("continuity must be 'left' or 'right'")
        cuts = [0] + [k + 1 for k in np.flatnonzero(np.diff(self.x) == 0)] + [len(self.x)]
        for s, e in zip(cuts[:-1], cuts[1:]):
            xs, ys = self.x[s:e], self.y[s:e]
            if len(xs) >= 4 and self.method == "spline":
                fn = CubicSpline(xs, ys, bc_type="not-a-knot", extrapolate=False)
            elif len(xs) >= 2:
                fn = PchipInterpolator(xs, ys, extrapolate=False)
            else:
                fn = None
            self._pieces.append((xs[0], xs[-1], ys[0], fn))

    @property
    def jumps(self) -> list[float]:
        return [float(v) for v in self.x[1:][np.diff(self.x) == 0]]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def _scalar(self, t: float) -> float:
        lo, hi = self.domain
        if t > hi:
            if self.tail is None:
                raise DomainError(f"{t} beyond the tabulated range [{lo}, {hi}]")
            return float(self.tail(t))
        if t < lo:
            if self.below is None:
                raise DomainError(f"{t} below the tabulated range [{lo}, {hi}]")
            return float(self.below)
        owners = [p for p in self._pieces if p[0] <= t <= p[1]]
        if len(owners) > 1:
            # t sits on a jump: left piece ends there, right piece starts there
            piece = owners[0] if self.continuity == "left" else owners[-1]
        else:
            piece = owners[0]
        x0, x1, y0, fn = piece
        if fn is None:
            return float(y0)
        return float(fn(t))

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self._scalar(float(t))
        arr = np.asarray(t, dtype=float)
        return np.array([self._scalar(float(v)) for v in arr.ravel()]).reshape(arr.shape)

    def left_limit(self, t: float) -> float:
        owners = [p for p in self._pieces if p[0] < t <= p[1]]
        if not owners:
            return self._scalar(t)
        x0, x1, y0, fn = owners[0]
        return float(y0 if fn is None else fn(t))

    def right_limit(self, t: float) -> float:
        owners = [p for p in self._pieces if p[0] <= t < p[1]]
        if not owners:
            if t >= self.domain[1] and self.tail is not None:
                return float(self.tail(t))
            return self._scalar(t)
        x0, x1, y0, fn = owners[-1]
        return float(y0 if fn is None else fn(t))

    def is_monotone(self, direction: int, tol: float = 1e-9) -> bool:
        """Check node ordinates (and jump directions) against ``direction`` = +-1."""
        d = np.diff(self.y) * direction
        scale = max(1.0, float(np.max(np.abs(self.y))))
        return bool(np.all(d >= -tol * scale))

    def scaled(self, c: float) -> "TabulatedCurve":
        tail = self.tail
        return TabulatedCurve(self.x.copy(), c * self.y, self.continuity,
                              None if tail is None else (lambda t: c * tail(t)),
                              None if self.below is None else c * self.below, self.method)

