"""One-boundary stopping: threshold, value, representation f_hat and J = V."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .diffusion import Boundary, DiffusionSpec
from .errors import BoundaryTermUnknown, DomainError, LimitViolation, NoPositiveSet, NoRoot
from .functionals import PSI, generator_value, l_functional, measure_integral, scan_grid
from .fundamental import FundamentalPair, second_derivative
from .payoffs import Payoff, Side
from .quadrature import integrate


@dataclass(frozen=True)
class OneSidedSearch:
    """Search settings; ``None`` bounds are derived from the state interval."""

    lower: float | None = None
    upper: float | None = None
    n_grid: int = 400
    xtol: float = 1e-10
    max_iter: int = 200
    ratio_cutoff: float = 1e-12


@dataclass
class RepresentationOneSided:
    """Solved one-sided problem.

    ``f_hat(x, side)`` is the raw representation function; it is the
    representation on ``[y_star, b)`` and a diagnostic below it.
    """

    y_star: float
    smooth_fit: bool
    jump_at_boundary: float
    monotone_on_stop_region: bool
    payoff: Payoff
    pair: FundamentalPair
    upper: float
    lower: float
    b: float = math.inf

    def f_hat(self, x: float, side: Side = Side.RIGHT) -> float:
        return f_hat(self.payoff, self.pair, x, side)

    def value(self, x: float) -> float:
        return value_threshold(self.payoff, self.pair, self.y_star, x)

    def f(self, x: float) -> float:
        """Representation function restricted to the stopping region."""
        return self.f_hat(x) if x >= self.y_star else 0.0


def value_threshold(payoff: Payoff, pair: FundamentalPair, y: float, x: float) -> float:
    """Value of stopping at the first passage above ``y``.

    Raises
    ------
    DomainError
        If ``g(y) < 0``.
    """
    gy = payoff.g(y)
    if gy < 0:
        raise DomainError(f"threshold {y} has negative payoff")
    if x >= y:
        return float(payoff.g(x))
    return float(pair.psi(x) * gy / pair.psi(y))


def f_hat(payoff: Payoff, pair: FundamentalPair, x: float, side: Side = Side.RIGHT) -> float:
    """``g(x) - psi(x) g'(x+-) / psi'(x)``."""
    return float(payoff.g(x) - pair.psi(x) * payoff.g_prime(x, side) / pair.psi_prime(x))


def lower_boundary_term(pair: FundamentalPair, spec: DiffusionSpec,
                        supplied: float | None = None) -> float:
    """Limit of ``psi'/S'`` at ``a``: zero for unattainable boundaries."""
    if supplied is not None:
        return supplied
    if spec.boundary_a in (Boundary.NATURAL, Boundary.ENTRANCE):
        return 0.0
    raise BoundaryTermUnknown("psi'/S' at an attainable lower boundary must be supplied")


def f_hat_integral(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, y_star: float,
                   x: float, boundary_term: float | None = None) -> float:
    """Integral form of ``f_hat(x)`` for ``x > y_star``.

    Numerator ``(L_psi g)(y*+)`` minus the generator measure of ``(y*, x)``
    weighted by psi; denominator ``r int_a^x psi m' + psi'(a+)/S'(a+)``.
    """
    if x <= y_star:
        raise DomainError("need x > y_star")
    num = l_functional(PSI, payoff, pair, y_star, Side.RIGHT)
    num -= measure_integral(payoff, spec, pair, pair.psi, y_star, x)
    den = spec.r * integrate(lambda t: pair.psi(t) * pair.m_prime(t), spec.a, x)
    den += lower_boundary_term(pair, spec, boundary_term)
    return float(num / den)


def default_lower(spec: DiffusionSpec) -> float:
    a = spec.a
    if math.isinf(a):
        return -50.0
    return a + 1e-6 * max(1.0, abs(a))


def upper_truncation(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, start: float,
                     cutoff: float = 1e-12, max_doublings: int = 200) -> float:
    """First point where ``g/psi`` has fallen below ``cutoff`` times its running max.

    Raises
    ------
    LimitViolation
        If ``g/psi`` does not decay before the search gives up.
    """
    b = spec.b
    x = max(start, 1.0) if start > 0 else 1.0
    best = -math.inf
    for _ in range(max_doublings):
        if math.isfinite(b) and x >= b:
            break
        ratio = payoff.g(x) / pair.psi(x)
        best = max(best, ratio)
        if best > 0 and ratio < cutoff * best:
            return float(x)
        x = 2.0 * x if x > 0 else x + 1.0
    if math.isfinite(b):
        xb = b - 1e-9 * max(1.0, abs(b))
        if best > 0 and payoff.g(xb) / pair.psi(xb) < cutoff * best:
            return float(xb)
    raise LimitViolation("g/psi does not vanish toward the upper boundary")


def _grid_with_kinks(payoff: Payoff, lo: float, hi: float, n: int) -> np.ndarray:
    xs = set(scan_grid(lo, hi, n).tolist())
    xs.update(k for k in payoff.kinks if lo < k < hi)
    return np.array(sorted(xs))


def solve_one_sided(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec,
                    search_cfg: OneSidedSearch | None = None) -> RepresentationOneSided:
    """Locate ``y* = inf{y : g(y) > 0, f_hat(y+) >= 0}`` and assemble the result.

    Kinks are grid nodes; a sign change across a kink declares a corner.

    Raises
    ------
    NoPositiveSet, NoRoot, LimitViolation
    """
    cfg = search_cfg or OneSidedSearch()
    lo = cfg.lower if cfg.lower is not None else default_lower(spec)
    try:
        hi = cfg.upper if cfg.upper is not None else upper_truncation(
            payoff, pair, spec, max(lo, 1.0), cfg.ratio_cutoff)
    except LimitViolation:
        probe = scan_grid(lo, lo + 1e6 if math.isinf(spec.b) else spec.b, 2000)[:-1]
        if not np.any(np.asarray([payoff.g(x) for x in probe]) > 0):
            raise NoPositiveSet("payoff is non-positive on the scanned range") from None
        raise
    xs = _grid_with_kinks(payoff, lo, hi, cfg.n_grid)
    kinks = set(payoff.kinks)
    gvals = np.array([payoff.g(x) for x in xs])
    if not np.any(gvals > 0):
        raise NoPositiveSet("payoff is non-positive on the search grid")
    fr = lambda x: f_hat(payoff, pair, x, Side.RIGHT)
    fl = lambda x: f_hat(payoff, pair, x, Side.LEFT)

    y_star = None
    prev = None
    for x, gx in zip(xs, gvals):
        if gx <= 0:
            prev = None
            continue
        right = fr(x)
        if prev is None:
            if right >= 0:
                y_star = float(x)
                break
            prev = x
            continue
        if x in kinks and fl(x) >= 0:
            end = x
            left_at_kink = lambda t: fl(t) if t == end else fr(t)
            y_star = brentq(left_at_kink, prev, x, xtol=cfg.xtol, maxiter=cfg.max_iter)
            break
        if right >= 0:
            if x in kinks:
                y_star = float(x)
            else:
                y_star = brentq(fr, prev, x, xtol=cfg.xtol, maxiter=cfg.max_iter)
            break
        prev = x
    if y_star is None:
        raise NoRoot("f_hat stays negative on the truncated domain")

    smooth = y_star not in kinks
    jump = 0.0 if smooth else fr(y_star)
    stop = xs[xs >= y_star]
    fv = np.array([fr(x) for x in stop])
    monotone = bool(np.all(np.diff(fv) >= -1e-9 * np.maximum(1.0, np.abs(fv[1:]))))
    return RepresentationOneSided(y_star, smooth, jump, monotone, payoff, pair, hi, lo, spec.b)


def j_value(rep: RepresentationOneSided, pair: FundamentalPair, x: float) -> float:
    """``psi(x) int_{max(x, y*)}^b f_hat psi' / psi^2`` by kink-split quadrature.

    An infinite upper limit is handled by the quadrature's tail transform.
    """
    start = max(x, rep.y_star)
    integrand = lambda t: rep.f_hat(t) * pair.psi_prime(t) / pair.psi(t) ** 2
    breaks = rep.payoff.kinks_in(start, rep.b)
    val = integrate(integrand, start, rep.b, breaks, epsabs=1e-14, epsrel=1e-11, limit=400)
    return float(pair.psi(x) * val)


@dataclass
class DiagnosisReport:
    """Sufficient-condition diagnostics for a monotone ``f_hat`` on ``[y, b)``."""

    y: float
    g_concave: bool
    psi_convex: bool
    condition_a: bool
    condition_b: bool
    witness_z: float | None
    f_hat_nondecreasing: bool
    decrease_points: list[float] = field(default_factory=list)
    d_grid: np.ndarray | None = None
    d_values: np.ndarray | None = None


def diagnose_monotonicity(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, y: float,
                          upper: float | None = None, n: int = 400) -> DiagnosisReport:
    """Report the two sufficient conditions and the sign trace of
    ``D = (G_r g) psi'/S' + r (L_psi g)``, whose non-positivity is equivalent
    to ``f_hat`` being non-decreasing between kinks."""
    hi = upper if upper is not None else upper_truncation(payoff, pair, spec, max(y, 1.0))
    kinks = set(payoff.kinks)
    xs = np.array([x for x in scan_grid(y, hi, n) if x not in kinks])
    tol = 1e-10
    g2 = np.array([payoff.g_second(x) for x in xs])
    psi2 = second_derivative(pair.psi, pair.psi_prime, spec, xs)
    stop_kinks = [k for k in payoff.kinks if k >= y]
    concave_kinks = all(payoff.derivative_jump(k) <= tol for k in stop_kinks)
    g_concave = bool(np.all(g2 <= tol * np.maximum(1.0, np.abs(g2))) and concave_kinks)
    psi_convex = bool(np.all(psi2 >= -tol * np.abs(psi2)))

    lo = default_lower(spec)
    below = scan_grid(lo, y, n)[:-1][::-1]
    witness = None
    cond_b = False
    for z in below:
        if z in kinks or f_hat(payoff, pair, z) >= 0:
            continue
        witness = float(z)
        region = np.concatenate(([z], xs[xs > z]))
        gen = np.array([generator_value(payoff, spec, t) for t in region if t not in kinks])
        ok_kinks = all(payoff.derivative_jump(k) <= tol for k in payoff.kinks if k > z)
        ok_gen = bool(np.all(gen <= tol) and np.all(np.diff(gen) <= tol * np.maximum(1.0, np.abs(gen[1:]))))
        cond_b = ok_kinks and ok_gen
        break

    gen_x = np.array([generator_value(payoff, spec, t) for t in xs])
    lpsi = np.array([l_functional(PSI, payoff, pair, t) for t in xs])
    d_vals = gen_x * pair.psi_prime(xs) / pair.s_prime(xs) + spec.r * lpsi
    scale = np.maximum(np.abs(gen_x * pair.psi_prime(xs) / pair.s_prime(xs)), np.abs(spec.r * lpsi))
    bad = xs[d_vals > 1e-9 * np.maximum(scale, 1e-300)]
    bad_kinks = [k for k in stop_kinks if payoff.derivative_jump(k) > tol]
    decrease = sorted(float(v) for v in list(bad) + bad_kinks)
    return DiagnosisReport(
        y=y,
        g_concave=g_concave,
        psi_convex=psi_convex,
        condition_a=g_concave and psi_convex,
        condition_b=cond_b,
        witness_z=witness,
        f_hat_nondecreasing=not decrease,
        decrease_points=decrease,
        d_grid=xs,
        d_values=d_vals,
    )
