"""Kink-aware generalized root search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NoRoot
from .payoffs import Side

SidedFn = Callable[[float, Side], float]


@dataclass(frozen=True)
class Crossing:
    """Location of the first up-crossing; ``at_kink`` marks a jump through zero."""

    x: float
    at_kink: bool


def first_upcrossing(f: SidedFn, grid: Sequence[float], kinks: Sequence[float] = (),
                     xtol: float = 1e-14, rtol: float = 4 * np.finfo(float).eps,
                     maxiter: int = 200) -> Crossing:
    """Generalized inverse ``inf{x in [grid[0], grid[-1]] : f(x+) >= 0}``.

    ``f`` is continuous off ``kinks`` and has one-sided limits there. Kinks
    are inserted into the scan; a sign change across a kink whose left value
    is still negative is reported as a crossing at the kink itself.

    Raises
    ------
    NoRoot
        If ``f`` stays negative on the scanned range.
    """
    lo, hi = float(grid[0]), float(grid[-1])
    kink_set = {float(k) for k in kinks if lo <= k <= hi}
    xs = sorted({float(x) for x in grid} | kink_set)
    prev = None
    for x in xs:
        right = f(x, Side.RIGHT)
        if prev is None:
            if right >= 0:
                return Crossing(x, x in kink_set)
            prev = x
            continue
        if x in kink_set:
            left = f(x, Side.LEFT)
            if left >= 0:
                end = x
                g = lambda t: f(t, Side.LEFT) if t == end else f(t, Side.RIGHT)
                if left == 0:
                    return Crossing(x, False)
                root = brentq(g, prev, x, xtol=xtol, rtol=rtol, maxiter=maxiter)
                return Crossing(float(root), False)
            if right >= 0:
                return Crossing(x, True)
        elif right >= 0:
            if right == 0:
                return Crossing(x, False)
            g = lambda t: f(t, Side.RIGHT)
            root = brentq(g, prev, x, xtol=xtol, rtol=rtol, maxiter=maxiter)
            return Crossing(float(root), False)
        prev = x
    raise NoRoot(f"no up-crossing on [{lo}, {hi}]")
