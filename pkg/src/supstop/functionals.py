"""Killed generator, the L_u functional, the ratio R(z, y) and the resolvent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .diffusion import DiffusionSpec
from .errors import DegenerateDenominator, GridTooCoarse
from .fundamental import FundamentalPair
from .payoffs import Payoff, Side
from .quadrature import integrate

UCoeffs = tuple[float, float]
PSI: UCoeffs = (1.0, 0.0)
PHI: UCoeffs = (0.0, 1.0)


def generator_value(payoff: Payoff, spec: DiffusionSpec, x: float, side: Side = Side.RIGHT) -> float:
    """``(G_r g)(x) = sigma^2 g'' / 2 + mu g' - r g`` using the one-sided ``g'``."""
    s = spec.sigma(x)
    return float(0.5 * s * s * payoff.g_second(x) + spec.mu(x) * payoff.g_prime(x, side)
                 - spec.r * payoff.g(x))


@dataclass
class GeneratorProfile:
    """Tabulated sign structure of ``G_r g``.

    Convex kinks act as positive point masses of the generator (and concave
    kinks as negative ones), so a kink can itself be a sign change.
    """

    value: Callable[[float], float]
    grid: np.ndarray
    values: np.ndarray
    sign_changes: list[float]
    argmax: float | None
    monotone_segments: list[tuple[tuple[float, float], str]]
    atoms: dict[float, float] = field(default_factory=dict)


def generator(payoff: Payoff, spec: DiffusionSpec, grid: Sequence[float],
              max_sign_changes: int = 8) -> GeneratorProfile:
    """Tabulate ``G_r g`` on ``grid`` and describe its sign structure.

    Grid points falling on kinks are dropped; the kink's derivative jump is
    recorded as an atom instead. Sign changes inside a cell are refined by
    bisection, the argmax by bounded Brent search in its bracketing cells.

    Raises
    ------
    GridTooCoarse
        If more than ``max_sign_changes`` sign changes are found.
    """
    kinks = set(payoff.kinks)
    xs = np.array(sorted(float(x) for x in grid if float(x) not in kinks))
    value = lambda x: generator_value(payoff, spec, x)
    vals = np.array([value(x) for x in xs])
    atoms = {k: payoff.derivative_jump(k) for k in payoff.kinks
             if xs[0] < k < xs[-1] and payoff.derivative_jump(k) != 0.0}

    # ordered sequence of signed samples, atoms inserted at their location
    events: list[tuple[float, float, str]] = [(x, v, "pt") for x, v in zip(xs, vals)]
    events += [(k, w, "atom") for k, w in atoms.items()]
    events.sort(key=lambda e: (e[0], e[2] == "pt"))
    changes: list[float] = []
    prev = None
    for x, v, tag in events:
        sgn = np.sign(v)
        if sgn == 0:
            continue
        if prev is not None and sgn != prev[1]:
            px, _, ptag = prev[0], prev[1], prev[2]
            if tag == "atom":
                changes.append(x)
            elif ptag == "atom":
                changes.append(px)
            else:
                lo, hi = px, x
                inner = [k for k in payoff.kinks if lo < k < hi]
                if inner:
                    changes.append(inner[0])
                else:
                    changes.append(brentq(value, lo, hi, xtol=1e-13))
        prev = (x, sgn, tag)
    if len(changes) > max_sign_changes:
        raise GridTooCoarse(f"{len(changes)} sign changes exceed the limit {max_sign_changes}")

    argmax = None
    if len(xs) >= 3:
        j = int(np.argmax(vals))
        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, len(xs) - 1)]
        inner = [k for k in payoff.kinks if lo < k < hi]
        if inner or j in (0, len(xs) - 1):
            argmax = float(xs[j])
        else:
            res = minimize_scalar(lambda t: -value(t), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
            argmax = float(res.x)

    segments = []
    d = np.sign(np.diff(vals))
    start = 0
    for k in range(1, len(d) + 1):
        if k == len(d) or d[k] != d[start]:
            label = {1.0: "increasing", -1.0: "decreasing", 0.0: "flat"}[float(d[start])]
            segments.append(((float(xs[start]), float(xs[k])), label))
            start = k
    return GeneratorProfile(value, xs, vals, changes, argmax, segments, atoms)


def l_functional(u_coeffs: UCoeffs, payoff: Payoff, pair: FundamentalPair, x: float,
                 side: Side = Side.RIGHT) -> float:
    """``(L_u g)(x) = (g u' - g' u) / S'`` with ``u = c1 psi + c2 phi``."""
    c1, c2 = u_coeffs
    u = c1 * pair.psi(x) + c2 * pair.phi(x)
    up = c1 * pair.psi_prime(x) + c2 * pair.phi_prime(x)
    return float((payoff.g(x) * up - payoff.g_prime(x, side) * u) / pair.s_prime(x))


def measure_integral(payoff: Payoff, spec: DiffusionSpec, pair: FundamentalPair,
                     weight: Callable[[float], float], z: float, y: float,
                     epsabs: float = 1e-10, epsrel: float = 1e-9) -> float:
    """``int_z^y w dG`` against the generator measure of ``g``.

    The measure has density ``(G_r g) m'`` plus a point mass
    ``(g'(k+) - g'(k-)) / S'(k)`` at each kink ``k`` strictly inside ``(z, y)``.
    """
    if y <= z:
        return 0.0
    dens = lambda t: generator_value(payoff, spec, t) * weight(t) * pair.m_prime(t)
    inner = payoff.kinks_in(z, y)
    total = integrate(dens, z, y, inner, epsabs=epsabs, epsrel=epsrel)
    for k in inner:
        total += weight(k) * payoff.derivative_jump(k) / pair.s_prime(k)
    return float(total)


def l_increment(u_coeffs: UCoeffs, payoff: Payoff, pair: FundamentalPair, z: float, y: float,
                spec: DiffusionSpec) -> float:
    """``(L_u g)(z+) - (L_u g)(y-)`` as a generator-measure integral over ``(z, y)``.

    The quadrature value is returned; the endpoint difference of
    :func:`l_functional` is the consistency check.
    """
    c1, c2 = u_coeffs
    w = lambda t: c1 * pair.psi(t) + c2 * pair.phi(t)
    return measure_integral(payoff, spec, pair, w, z, y)


def l_difference(u_coeffs: UCoeffs, payoff: Payoff, pair: FundamentalPair, z: float, y: float,
                 z_side: Side = Side.RIGHT, y_side: Side = Side.LEFT) -> float:
    """Closed-form ``(L_u g)(z) - (L_u g)(y)`` from endpoint values."""
    return (l_functional(u_coeffs, payoff, pair, z, z_side)
            - l_functional(u_coeffs, payoff, pair, y, y_side))


def _l_one(u_coeffs: UCoeffs, pair: FundamentalPair, x: float) -> float:
    c1, c2 = u_coeffs
    return float((c1 * pair.psi_prime(x) + c2 * pair.phi_prime(x)) / pair.s_prime(x))


def ratio_r(payoff: Payoff, pair: FundamentalPair, z: float, y: float,
            u_coeffs: UCoeffs = PSI, spec: DiffusionSpec | None = None) -> float:
    """``R(z, y) = [(L_u g)(z) - (L_u g)(y)] / [(L_u 1)(z) - (L_u 1)(y)]``.

    Symmetric in ``(z, y)``. The value is the ``u m'``-weighted mean of
    ``-(G_r g) / r`` over ``(z, y)``, so it depends on ``u`` unless ``G_r g``
    is constant there; every ``u`` gives the same limit ``-(G_r g)(z) / r`` as
    ``y -> z``, which is returned directly when the points nearly coincide
    and ``spec`` is given.

    Raises
    ------
    DegenerateDenominator
        If the denominator vanishes relative to its terms.
    """
    if z > y:
        z, y = y, z
    if spec is not None and abs(y - z) < 1e-8 * max(1.0, abs(z)):
        return -generator_value(payoff, spec, z) / spec.r
    num = l_difference(u_coeffs, payoff, pair, z, y)
    d1, d2 = _l_one(u_coeffs, pair, z), _l_one(u_coeffs, pair, y)
    den = d1 - d2
    if abs(den) <= 1e-14 * max(abs(d1), abs(d2)):
        raise DegenerateDenominator(f"ratio denominator vanishes at ({z}, {y})")
    return num / den


def resolvent(pi: Callable[[float], float], pair: FundamentalPair, spec: DiffusionSpec,
              x: float) -> float:
    """Green-kernel value ``(R_r pi)(x)``.

    Raises
    ------
    QuadratureFailure
        If either kernel integral fails to converge (``pi`` not r-integrable).
    """
    a, b = spec.interval
    lower = integrate(lambda t: pair.psi(t) * pi(t) * pair.m_prime(t), a, x)
    upper = integrate(lambda t: pair.phi(t) * pi(t) * pair.m_prime(t), x, b)
    return float((pair.phi(x) * lower + pair.psi(x) * upper) / pair.wronskian_B)


def scan_grid(lo: float, hi: float, n: int, geometric: bool | None = None) -> np.ndarray:
    """Evaluation grid on ``[lo, hi]``; geometric when both ends are positive."""
    if geometric is None:
        geometric = lo > 0 and hi / lo > 20
    if geometric:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


