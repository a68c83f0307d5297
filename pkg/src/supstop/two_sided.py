"""Two-boundary stopping: optimal pair, matching curves, representation and J = V."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .curves import TabulatedCurve
from .diffusion import DiffusionSpec
from .errors import (
    DomainError,
    ExtrapolationWarning,
    MismatchError,
    MonotonicityFailure,
    NoInteriorRoot,
    NonMonotoneCurve,
    NoRoot,
    NotSupported,
    OptimizationWarning,
    RootLost,
    ShapeViolation,
)
from .functionals import PHI, PSI, generator, generator_value, l_functional, measure_integral, scan_grid
from .fundamental import FundamentalPair, KilledSolutions
from .one_sided import default_lower, f_hat, upper_truncation
from .payoffs import Payoff, Side
from .quadrature import integrate
from .roots import first_upcrossing


# ---------------------------------------------------------------------------
# two-point value and its coefficients

@dataclass(frozen=True)
class TwoSidedValueCoeffs:
    """``V_{z,y}(x) = A1(z, y) phi(x) + A2(z, y) psi(x)`` inside ``(z, y)``."""

    A1: Callable[[float, float], float]
    A2: Callable[[float, float], float]


def value_coefficients(payoff: Payoff, pair: FundamentalPair) -> TwoSidedValueCoeffs:
    g, psi, phi = payoff.g, pair.psi, pair.phi

    def den(z, y):
        return psi(y) * phi(z) - psi(z) * phi(y)

    return TwoSidedValueCoeffs(
        A1=lambda z, y: float((psi(y) * g(z) - g(y) * psi(z)) / den(z, y)),
        A2=lambda z, y: float((phi(z) * g(y) - g(z) * phi(y)) / den(z, y)),
    )


def value_two_sided(payoff: Payoff, pair: FundamentalPair, z: float, y: float, x: float) -> float:
    """Value of stopping at the first exit from ``(z, y)``.

    Raises
    ------
    DomainError
        If ``z >= y``.
    """
    if not z < y:
        raise DomainError(f"need z < y, got ({z}, {y})")
    if x <= z or x >= y:
        return float(payoff.g(x))
    k = KilledSolutions(pair)
    return float(k.phi_hat(y, x) / k.phi_hat(y, z) * payoff.g(z)
                 + k.psi_hat(z, x) / k.psi_hat(z, y) * payoff.g(y))


# ---------------------------------------------------------------------------
# the generating ratios F1^y(i) and F2^z(m)

def f1_ratio(payoff: Payoff, pair: FundamentalPair, i: float, y: float,
             side: Side = Side.RIGHT) -> float:
    """Closed ratio ``F1^y(i)``: the lower-boundary generating function."""
    k = KilledSolutions(pair)
    s = pair.s_prime(i)
    B = pair.wronskian_B
    ph, php = k.phi_hat(y, i), k.phi_hat_prime(y, i)
    num = payoff.g_prime(i, side) * ph / s - payoff.g(i) * php / s - B * payoff.g(y)
    return float(num / (-B - php / s))


def f2_ratio(payoff: Payoff, pair: FundamentalPair, z: float, m: float,
             side: Side = Side.RIGHT) -> float:
    """Closed ratio ``F2^z(m)``: the upper-boundary generating function."""
    k = KilledSolutions(pair)
    s = pair.s_prime(m)
    B = pair.wronskian_B
    ps, psp = k.psi_hat(z, m), k.psi_hat_prime(z, m)
    num = payoff.g_prime(m, side) * ps / s - payoff.g(m) * psp / s + B * payoff.g(z)
    return float(num / (B - psp / s))


def f1_ratio_integral(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, i: float,
                      y: float, side: Side = Side.RIGHT) -> float:
    """``-int G phi_hat_y dG / (r int phi_hat_y m')`` over ``(i, y)``.

    With ``side=LEFT`` the generator atom sitting at ``i`` is included.
    """
    k = KilledSolutions(pair)
    w = lambda t: k.phi_hat(y, t)
    num = measure_integral(payoff, spec, pair, w, i, y, epsabs=0.0, epsrel=1e-11)
    if side == Side.LEFT and i in payoff.kinks:
        num += w(i) * payoff.derivative_jump(i) / pair.s_prime(i)
    den = spec.r * integrate(lambda t: w(t) * pair.m_prime(t), i, y, epsabs=0.0, epsrel=1e-11)
    return float(-num / den)


def f2_ratio_integral(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, z: float,
                      m: float, side: Side = Side.LEFT) -> float:
    """``-int G psi_hat_z dG / (r int psi_hat_z m')`` over ``(z, m)``.

    With ``side=RIGHT`` the generator atom sitting at ``m`` is included.
    """
    k = KilledSolutions(pair)
    w = lambda t: k.psi_hat(z, t)
    num = measure_integral(payoff, spec, pair, w, z, m, epsabs=0.0, epsrel=1e-11)
    if side == Side.RIGHT and m in payoff.kinks:
        num += w(m) * payoff.derivative_jump(m) / pair.s_prime(m)
    den = spec.r * integrate(lambda t: w(t) * pair.m_prime(t), z, m, epsabs=0.0, epsrel=1e-11)
    return float(-num / den)


# ---------------------------------------------------------------------------
# the optimality function H and its partial derivatives

def _l_one(u, pair, x):
    c1, c2 = u
    return float((c1 * pair.psi_prime(x) + c2 * pair.phi_prime(x)) / pair.s_prime(x))


def u1_boundary_values(pair: FundamentalPair, z: float, y: float) -> tuple[float, float]:
    """``(u1(z), u1(y))``; an admissible pair has ``u1(z) > 0 > u1(y)``."""
    dpsi = _l_one(PSI, pair, y) - _l_one(PSI, pair, z)
    dphi = _l_one(PHI, pair, y) - _l_one(PHI, pair, z)
    u1 = lambda t: pair.phi(t) * dpsi - pair.psi(t) * dphi
    return float(u1(z)), float(u1(y))


def h_function(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, z: float,
               y: float) -> float:
    """``H(z, y) = int_z^y u1 dG`` against the generator measure of ``g``."""
    if y <= z:
        return 0.0
    dpsi = _l_one(PSI, pair, y) - _l_one(PSI, pair, z)
    dphi = _l_one(PHI, pair, y) - _l_one(PHI, pair, z)
    u1 = lambda t: pair.phi(t) * dpsi - pair.psi(t) * dphi
    return measure_integral(payoff, spec, pair, u1, z, y, epsabs=0.0, epsrel=1e-11)


def h_closed(payoff: Payoff, pair: FundamentalPair, z: float, y: float,
             z_side: Side = Side.RIGHT, y_side: Side = Side.LEFT) -> float:
    """``H`` from endpoint values of ``L_psi g`` and ``L_phi g``."""
    dpsi = _l_one(PSI, pair, y) - _l_one(PSI, pair, z)
    dphi = _l_one(PHI, pair, y) - _l_one(PHI, pair, z)
    lpsi = l_functional(PSI, payoff, pair, z, z_side) - l_functional(PSI, payoff, pair, y, y_side)
    lphi = l_functional(PHI, payoff, pair, z, z_side) - l_functional(PHI, payoff, pair, y, y_side)
    return float(dpsi * lphi - dphi * lpsi)


def h_partials(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, z: float,
               y: float) -> tuple[float, float]:
    """``(H_z, H_y)`` from the differentiated integral representation."""
    k = KilledSolutions(pair)
    uz, uy = u1_boundary_values(pair, z, y)
    gz, gy = generator_value(payoff, spec, z), generator_value(payoff, spec, y, Side.LEFT)
    int_psi = measure_integral(payoff, spec, pair, lambda t: k.psi_hat(z, t), z, y,
                               epsabs=0.0, epsrel=1e-11)
    int_phi = measure_integral(payoff, spec, pair, lambda t: k.phi_hat(y, t), z, y,
                               epsabs=0.0, epsrel=1e-11)
    hz = pair.m_prime(z) * (spec.r * int_psi - gz * uz)
    hy = pair.m_prime(y) * (spec.r * int_phi + gy * uy)
    return float(hz), float(hy)


# ---------------------------------------------------------------------------
# optimal pair

@dataclass(frozen=True)
class TwoSidedSearch:
    """Search settings for the optimal pair; ``None`` bounds are derived."""

    lower: float | None = None
    upper: float | None = None
    n_outer: int = 60
    n_inner: int = 160
    xtol: float = 1e-14
    newton_max_iter: int = 50
    max_halvings: int = 40
    newton_fail_limit: int = 3
    residual_tol: float = 1e-12
    z_guess: float | None = None
    y_guess: float | None = None
    ratio_cutoff: float = 1e-12
    generator_grid: int = 400


@dataclass
class OptimalPair:
    """Solved thresholds with their diagnostics."""

    z_star: float
    y_star: float
    smooth_fit_lower: bool
    smooth_fit_upper: bool
    method: str
    x0: float
    x1: float
    lower: float
    upper: float
    residual_f1: float
    residual_f2: float
    u1_violations: int = 0

    def __iter__(self):
        return iter((self.z_star, self.y_star))


class _Problem:
    """Shared evaluation context for the pair solver and the curve tracer."""

    def __init__(self, payoff, pair, spec, lower, upper, n_inner, xtol):
        self.payoff, self.pair, self.spec = payoff, pair, spec
        self.lower, self.upper = lower, upper
        self.n_inner, self.xtol = n_inner, xtol
        self.kinks = tuple(payoff.kinks)
        self.u1_violations = 0

    def f1(self, i, y, side=Side.RIGHT):
        return f1_ratio(self.payoff, self.pair, i, y, side)

    def f2(self, z, m, side=Side.RIGHT):
        return f2_ratio(self.payoff, self.pair, z, m, side)

    def check_u1(self, z, y):
        uz, uy = u1_boundary_values(self.pair, z, y)
        if not (uz > 0 > uy):
            self.u1_violations += 1

    def upper_for(self, z, start):
        """First ``y >= start`` with ``F2^z(y+) >= 0``."""
        lo = max(start, z + 1e-9 * max(1.0, abs(z)))
        grid = scan_grid(lo, self.upper, self.n_inner)
        cross = first_upcrossing(lambda m, s: self.f2(z, m, s), grid, self.kinks, xtol=self.xtol)
        self.check_u1(z, cross.x)
        return cross


def _shape(payoff, spec, lower, upper, n) -> tuple[float, float]:
    prof = generator(payoff, spec, scan_grid(lower, upper, n))
    if len(prof.sign_changes) != 2:
        raise ShapeViolation(
            f"generator has {len(prof.sign_changes)} sign changes, two are required")
    x0, x1 = prof.sign_changes
    return float(x0), float(x1)


def _newton(prob: _Problem, z, y, x0, x1, cfg: TwoSidedSearch):
    """Damped Newton on ``(L_psi g, L_phi g)`` differences; ``None`` on failure."""
    payoff, pair, spec = prob.payoff, prob.pair, prob.spec

    def merit(z, y):
        return abs(prob.f1(z, y)) + abs(prob.f2(z, y, Side.LEFT))

    def inside(z, y):
        return prob.lower < z < x0 and x1 < y < prob.upper

    if not inside(z, y):
        return None
    failures = 0
    cur = merit(z, y)
    for _ in range(cfg.newton_max_iter):
        scale = max(abs(payoff.g(z)), abs(payoff.g(y)), 1e-300)
        if cur <= cfg.residual_tol * scale:
            return z, y
        e = np.array([
            l_functional(PSI, payoff, pair, z) - l_functional(PSI, payoff, pair, y, Side.LEFT),
            l_functional(PHI, payoff, pair, z) - l_functional(PHI, payoff, pair, y, Side.LEFT),
        ])
        gz, gy = generator_value(payoff, spec, z), generator_value(payoff, spec, y, Side.LEFT)
        mz, my = pair.m_prime(z), pair.m_prime(y)
        jac = np.array([
            [-gz * pair.psi(z) * mz, gy * pair.psi(y) * my],
            [-gz * pair.phi(z) * mz, gy * pair.phi(y) * my],
        ])
        try:
            step = np.linalg.solve(jac, -e)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        lam = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            zn, yn = z + lam * step[0], y + lam * step[1]
            if inside(zn, yn):
                new = merit(zn, yn)
                if new < cur:
                    z, y, cur, accepted = zn, yn, new, True
                    break
            lam *= 0.5
        if not accepted:
            failures += 1
            if failures >= cfg.newton_fail_limit:
                return None
    return None


def _nested(prob: _Problem, x0, x1, cfg: TwoSidedSearch):
    """Outer generalized root in ``z`` of ``F1^{y(z)}(z)``, inner root ``y(z)``."""
    cache: dict[float, float] = {}

    def y_of(z):
        if z not in cache:
            cache[z] = prob.upper_for(z, x1).x
        return cache[z]

    def neg_r(z, side):
        return -prob.f1(z, y_of(z), side)

    grid = scan_grid(prob.lower, x0, cfg.n_outer)
    try:
        cross = first_upcrossing(neg_r, grid, prob.kinks, xtol=cfg.xtol)
    except NoRoot as exc:
        raise NoInteriorRoot("the lower first-order condition has no root below x0") from exc
    if cross.x <= prob.lower:
        raise NoInteriorRoot("the lower first-order condition holds at the search bound")
    return cross.x, y_of(cross.x)


def solve_optimal_pair(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec,
                       search_cfg: TwoSidedSearch | None = None) -> OptimalPair:
    """Thresholds ``z* < y*`` maximizing the two-point value.

    Newton on the L-difference system is tried first; if it fails it falls
    back to nested bisection, which also handles corners at kinks by
    generalized roots of the one-sided first-order conditions.

    Raises
    ------
    ShapeViolation
        If the generator does not change sign exactly twice.
    NoInteriorRoot
        If neither Newton nor nested bisection closes.
    """
    cfg = search_cfg or TwoSidedSearch()
    lower = cfg.lower if cfg.lower is not None else default_lower(spec)
    upper = cfg.upper if cfg.upper is not None else upper_truncation(
        payoff, pair, spec, max(lower, 1.0), cfg.ratio_cutoff)
    x0, x1 = _shape(payoff, spec, lower, upper, cfg.generator_grid)
    prob = _Problem(payoff, pair, spec, lower, upper, cfg.n_inner, cfg.xtol)

    method = None
    z = y = None
    if cfg.z_guess is not None or cfg.y_guess is not None:
        z0 = cfg.z_guess if cfg.z_guess is not None else x0 - 0.2 * (x0 - lower)
        y0 = cfg.y_guess if cfg.y_guess is not None else x1 + 0.2 * max(1.0, abs(x1))
    else:
        z0, y0 = x0 - 0.2 * (x0 - lower), x1 + 0.2 * max(1.0, abs(x1))
    res = _newton(prob, z0, y0, x0, x1, cfg)
    if res is not None:
        zn, yn = res
        # accept only if the nested conditions agree: y is the first up-crossing for z
        try:
            y_check = prob.upper_for(zn, x1)
            if not y_check.at_kink and abs(y_check.x - yn) <= 1e-8 * max(1.0, abs(yn)):
                z, y, method = zn, y_check.x, "newton"
        except NoRoot:
            pass
    if z is None:
        z, y = _nested(prob, x0, x1, cfg)
        method = "nested_bisection"
    smooth_lower = z not in prob.kinks
    smooth_upper = y not in prob.kinks
    if smooth_lower and smooth_upper and method != "newton":
        res = _newton(prob, z, y, x0, x1, cfg)
        if res is not None and abs(res[0] - z) <= 1e-6 * max(1.0, abs(z)):
            z, y = res
            method += "+newton"
    prob.check_u1(z, y)
    return OptimalPair(
        z_star=float(z), y_star=float(y),
        smooth_fit_lower=smooth_lower, smooth_fit_upper=smooth_upper,
        method=method, x0=x0, x1=x1, lower=lower, upper=upper,
        residual_f1=prob.f1(z, y, Side.LEFT), residual_f2=prob.f2(z, y, Side.RIGHT),
        u1_violations=prob.u1_violations,
    )


def upper_given_lower(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, z: float,
                      search_cfg: TwoSidedSearch | None = None) -> float:
    """Best upper threshold for a pinned lower threshold ``z``.

    The search starts at the first point above ``z`` where ``g`` is positive.
    """
    cfg = search_cfg or TwoSidedSearch()
    upper = cfg.upper if cfg.upper is not None else upper_truncation(
        payoff, pair, spec, max(z, 1.0), cfg.ratio_cutoff)
    grid = scan_grid(z, upper, cfg.n_inner)
    start = next((float(t) for t in grid[1:] if payoff.g(t) > 0), None)
    if start is None:
        raise NoRoot("payoff is non-positive above the pinned threshold")
    positive = [k for k in payoff.kinks if z < k < start and payoff.g(k) > 0]
    if positive:
        start = min(positive)
    prob = _Problem(payoff, pair, spec, z, upper, cfg.n_inner, cfg.xtol)
    return prob.upper_for(z, start).x


# ---------------------------------------------------------------------------
# matching curve beta and crossover zeta

@dataclass(frozen=True)
class BetaGridConfig:
    """Tabulation settings for the matching curve.

    Nodes are geometric in the distance to ``a`` (or to ``z*`` when ``a`` is
    infinite) and go down to ``depth`` times that distance. The dual check
    visits at most ``dual_max_checks`` evenly spaced nodes plus every kink node.
    """

    n_nodes: int = 200
    depth: float = 1e-6
    refine_passes: int = 8
    refine_tol: float = 1e-9
    dual_check: bool = True
    dual_rtol: float = 1e-6
    dual_max_checks: int = 80
    zeta_warn_tol: float = 1e-4
    flat_tol: float = 1e-9
    upper: float | None = None


@dataclass
class BetaNode:
    i: float
    side: Side
    beta: float
    f1: float


@dataclass
class BetaTrace:
    """Traced nodes in decreasing ``i`` together with the crossover point."""

    nodes: list[BetaNode]
    zeta: float
    zeta_extrapolated: float
    f1_at_a: float
    escaped: bool
    beta: TabulatedCurve | None = None


def _nodes(spec: DiffusionSpec, z_star: float, cfg: BetaGridConfig) -> np.ndarray:
    a = spec.a
    frac = np.geomspace(1.0, cfg.depth, cfg.n_nodes)
    if math.isfinite(a):
        return a + (z_star - a) * frac
    span = 50.0 * max(1.0, abs(z_star))
    return z_star - span * (1.0 - frac) / (1.0 - cfg.depth)


def _limit_at_a(fn: Callable[[float], float], spec: DiffusionSpec, start: float) -> float:
    """Numerical limit of ``fn`` toward ``a`` along a geometric sequence."""
    a = spec.a
    prev = fn(start)
    for k in range(1, 13):
        t = a + (start - a) * 10.0 ** (-k) if math.isfinite(a) else start - 10.0 ** k
        try:
            cur = fn(t)
        except (ZeroDivisionError, FloatingPointError, OverflowError):
            break
        if not math.isfinite(cur):
            break
        if abs(cur - prev) <= 1e-13 * max(1.0, abs(cur)):
            return float(cur)
        prev = cur
    return float(prev)


def _aitken(seq: list[float]) -> float:
    if len(seq) < 3:
        return seq[-1]
    b0, b1, b2 = seq[-3:]
    d1, d2 = b1 - b0, b2 - b1
    den = d2 - d1
    if den == 0 or abs(d2) < 1e-15 * max(1.0, abs(b2)):
        return b2
    return b2 - d2 * d2 / den


def trace_beta(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, z_star: float,
               y_star: float, grid_cfg: BetaGridConfig | None = None) -> BetaTrace:
    """Follow the matching curve ``beta`` from ``(z*, y*)`` toward ``a``.

    At each node ``beta(i)`` is the first ``y >= beta(previous node)`` with
    ``F1^y(i) <= F2^i(y+)``; a warm-started expanding bracket is refined by
    the kink-aware root search. The crossover ``zeta`` is the generalized
    inverse of ``f_hat`` at the limit ``f1(a+)``; Aitken extrapolation of the
    deepest nodes is the cross-check.

    Raises
    ------
    RootLost
        If a bracket cannot be refined mid-curve.
    NonMonotoneCurve
        If the curve would have to move down as ``i`` decreases.
    """
    cfg = grid_cfg or BetaGridConfig()
    upper = cfg.upper if cfg.upper is not None else upper_truncation(
        payoff, pair, spec, max(y_star, 1.0))
    kinks = tuple(payoff.kinks)
    kink_set = set(kinks)

    def phi_gap(i, i_side, y, y_side):
        return f1_ratio(payoff, pair, i, y, i_side) - f2_ratio(payoff, pair, i, y, y_side)

    def solve_node(i, i_side, beta_prev):
        g = lambda y, s: -phi_gap(i, i_side, y, s)
        if g(beta_prev, Side.RIGHT) >= 0:
            if beta_prev not in kink_set:
                probe = beta_prev - 1e-6 * max(1.0, abs(beta_prev))
                if probe > i and g(probe, Side.RIGHT) >= 0 and beta_prev != y_star:
                    raise NonMonotoneCurve(f"matching curve decreases at i={i}")
            return beta_prev, False
        step = max(1e-3 * max(1.0, abs(beta_prev)), 0.0)
        lo = beta_prev
        while True:
            hi = min(lo + step, upper)
            try:
                cross = first_upcrossing(g, [lo, hi], kinks)
                return cross.x, False
            except NoRoot:
                pass
            except ValueError as exc:
                raise RootLost(f"bracket refinement failed at i={i}: {exc}", last_node=i) from exc
            if hi >= upper:
                return upper, True
            lo, step = hi, 2.0 * step

    base = [float(t) for t in _nodes(spec, z_star, cfg)]
    inner_kinks = [k for k in kinks if base[-1] < k < z_star]
    points = sorted(set(base) | set(inner_kinks), reverse=True)

    nodes: list[BetaNode] = []
    beta_prev = y_star
    escaped = False

    def add(i, side, beta_prev):
        b, esc = solve_node(i, side, beta_prev)
        if not esc:
            nodes.append(BetaNode(i, side, b, f1_ratio(payoff, pair, i, b, side)))
        return b, esc

    nodes.append(BetaNode(z_star, Side.LEFT, y_star, f1_ratio(payoff, pair, z_star, y_star, Side.LEFT)))
    for i in points[1:]:
        sides = (Side.RIGHT, Side.LEFT) if i in kink_set else (Side.RIGHT,)
        for s in sides:
            beta_prev, escaped = add(i, s, beta_prev)
            if escaped:
                break
        if escaped:
            break

    # bisect intervals until PCHIP reproduces freshly solved midpoints
    order = lambda n: (-n.i, 0 if n.side == Side.RIGHT else 1)
    flagged = None
    for _ in range(cfg.refine_passes):
        if escaped:
            break
        asc = nodes[::-1]
        cx = np.array([n.i for n in asc])
        f1c = TabulatedCurve(cx, np.array([n.f1 for n in asc]), "left", method="spline")
        bc = TabulatedCurve(cx, np.array([n.beta for n in asc]), "left", method="spline")
        s_f1 = max(float(np.max(np.abs(f1c.y))), 1e-300)
        s_b = max(1.0, float(np.max(np.abs(bc.y))))
        added, next_flagged = [], set()
        for prev, cur in zip(nodes[:-1], nodes[1:]):
            key = (prev.i, cur.i)
            if cur.i >= prev.i or (flagged is not None and key not in flagged):
                continue
            if any(cur.i < k < prev.i for k in kink_set):
                continue
            mid = (math.sqrt(prev.i * cur.i) if prev.i > 0 and cur.i > 0
                   else 0.5 * (prev.i + cur.i))
            if not cur.i < mid < prev.i:
                continue
            b, esc = solve_node(mid, Side.RIGHT, prev.beta)
            if esc:
                continue
            node = BetaNode(mid, Side.RIGHT, b, f1_ratio(payoff, pair, mid, b, Side.RIGHT))
            added.append(node)
            err = max(abs(float(f1c(mid)) - node.f1) / s_f1, abs(float(bc(mid)) - b) / s_b)
            if err > cfg.refine_tol:
                next_flagged.update({(prev.i, mid), (mid, cur.i)})
        nodes = sorted(nodes + added, key=order)
        flagged = next_flagged
        if not flagged:
            break

    f1_a = _limit_at_a(lambda t: float(payoff.g(t) - payoff.g_prime(t, Side.RIGHT)
                                       * pair.phi(t) / pair.phi_prime(t)),
                       spec, nodes[-1].i)
    try:
        cross = first_upcrossing(lambda m, s: f_hat(payoff, pair, m, s) - f1_a,
                                 scan_grid(y_star, upper, 400), kinks)
        zeta = cross.x
    except NoRoot:
        zeta = math.inf
    deep = [n.beta for n in nodes if n.side == Side.RIGHT][-3:]
    zeta_x = _aitken(deep)
    if math.isfinite(zeta) and abs(zeta - zeta_x) > cfg.zeta_warn_tol * max(1.0, abs(zeta)):
        warnings.warn(f"crossover point {zeta:.10g} differs from the extrapolated curve limit "
                      f"{zeta_x:.10g}", ExtrapolationWarning, stacklevel=2)
    trace = BetaTrace(nodes, zeta, zeta_x, f1_a, escaped)
    trace.beta = _beta_curve(trace, spec)
    return trace


def _beta_curve(trace: BetaTrace, spec: DiffusionSpec) -> TabulatedCurve:
    nodes = trace.nodes[::-1]
    xs = [n.i for n in nodes]
    ys = [n.beta for n in nodes]
    below = trace.zeta if math.isfinite(trace.zeta) else ys[0]
    if math.isfinite(spec.a) and math.isfinite(trace.zeta):
        xs.insert(0, spec.a)
        ys.insert(0, max(trace.zeta, ys[0]))
    return TabulatedCurve(np.array(xs), np.array(ys), "left", below=below, method="spline")


# ---------------------------------------------------------------------------
# representation functions

@dataclass
class DualCheckReport:
    max_rel_dev: float
    worst_node: float | None
    checked: int


def f1_f2(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, trace: BetaTrace,
          y_star: float, grid_cfg: BetaGridConfig | None = None):
    """Tabulate ``f1``, ``f2`` and ``alpha`` from a traced matching curve.

    ``f1`` is checked against the integral ratio at every node. Returns
    ``(f1, f2, alpha, report)``.

    Raises
    ------
    MismatchError
        If closed and integral ratios disagree.
    MonotonicityFailure
        If ``f1`` increases or ``f2`` decreases beyond tolerance.
    """
    cfg = grid_cfg or BetaGridConfig()
    nodes = trace.nodes
    vals = np.array([n.f1 for n in nodes])
    scale = max(float(np.max(np.abs(vals))), abs(trace.f1_at_a), 1e-300)

    worst, worst_at, checked = 0.0, None, 0
    if cfg.dual_check:
        stride = max(1, math.ceil(len(nodes) / max(cfg.dual_max_checks, 1)))
        kinks = set(payoff.kinks)
        for k, n in enumerate(nodes):
            if n.beta <= n.i:
                continue
            if k % stride and n.i not in kinks and n.beta not in kinks:
                continue
            alt = f1_ratio_integral(payoff, pair, spec, n.i, n.beta, n.side)
            dev = abs(alt - n.f1) / max(abs(n.f1), 1e-3 * scale)
            checked += 1
            if dev > worst:
                worst, worst_at = dev, n.i
        if worst > cfg.dual_rtol:
            raise MismatchError(f"closed and integral f1 disagree by {worst:.3g} at i={worst_at}")

    if np.any(np.diff(vals) < -cfg.flat_tol * scale * 1e3):
        raise MonotonicityFailure("f1 increases toward a")

    asc = nodes[::-1]
    f1_x = [n.i for n in asc]
    f1_y = [n.f1 for n in asc]
    if math.isfinite(spec.a):
        f1_x.insert(0, spec.a)
        f1_y.insert(0, max(trace.f1_at_a, f1_y[0]))
    f1_curve = TabulatedCurve(np.array(f1_x), np.array(f1_y), "left", below=trace.f1_at_a,
                              method="spline")

    # f2 on [y*, zeta): pairs (beta, f1) sorted by m; a flat stretch of beta is a jump of f2
    zeta = trace.zeta
    tiny = 1e-10 * max(1.0, abs(zeta) if math.isfinite(zeta) else abs(nodes[-1].beta))
    pts = []
    for n in nodes:
        if n.beta >= zeta - tiny:
            continue
        if pts and n.beta != pts[-1][0] and n.beta - pts[-1][0] < tiny:
            continue  # numerically coincident, not a genuine flat stretch
        pts.append((n.beta, n.f1, n.i))
    m_x, m_y, a_x, a_y = [], [], [], []
    k = 0
    while k < len(pts):
        m = pts[k][0]
        group = [p for p in pts[k:] if p[0] == m]
        first, last = group[0], group[-1]
        m_x.append(m); m_y.append(first[1])
        a_x.append(m); a_y.append(first[2])
        if len(group) > 1:
            m_x.append(m); m_y.append(last[1])
            a_x.append(m); a_y.append(last[2])
        k += len(group)
    fhat_tail = lambda t: f_hat(payoff, pair, t, Side.RIGHT)
    if math.isfinite(zeta) and m_x and zeta > m_x[-1]:
        m_x.append(zeta); m_y.append(max(trace.f1_at_a, m_y[-1]))
        a_x.append(zeta); a_y.append(spec.a if math.isfinite(spec.a) else a_y[-1])
    if not m_x:
        # the whole upper representation is the one-sided formula
        m_x, m_y = [y_star], [fhat_tail(y_star)]
        a_x, a_y = [y_star], [spec.a if math.isfinite(spec.a) else trace.nodes[-1].i]
    f2_curve = TabulatedCurve(np.array(m_x), np.array(m_y), "right", tail=fhat_tail)
    a_fill = spec.a if math.isfinite(spec.a) else trace.nodes[-1].i
    alpha_curve = TabulatedCurve(np.array(a_x), np.array(a_y), "right", tail=lambda t: a_fill)
    if not f2_curve.is_monotone(+1, tol=cfg.flat_tol * 1e3):
        raise MonotonicityFailure("f2 decreases on its tabulation grid")
    return f1_curve, f2_curve, alpha_curve, DualCheckReport(worst, worst_at, checked)


@dataclass
class RepresentationTwoSided:
    """Solved two-sided problem with its representation functions."""

    z_star: float
    y_star: float
    zeta: float
    beta: TabulatedCurve
    alpha: TabulatedCurve
    f1: TabulatedCurve
    f2: TabulatedCurve
    smooth_fit_lower: bool
    smooth_fit_upper: bool
    payoff: Payoff
    pair: FundamentalPair
    spec: DiffusionSpec
    f1_at_a: float
    zeta_extrapolated: float
    i_min: float
    dual: DualCheckReport
    trace: BetaTrace = field(repr=False, default=None)

    def value(self, x: float) -> float:
        return value_two_sided(self.payoff, self.pair, self.z_star, self.y_star, x)

    def f(self, x: float) -> float:
        """``f1`` on ``(a, z*]``, ``f2`` on ``[y*, b)`` and ``nan`` in between."""
        if x <= self.z_star:
            return float(self.f1(x))
        if x >= self.y_star:
            return float(self.f2(x))
        return math.nan

    def scaled(self, c: float) -> "RepresentationTwoSided":
        """Representation of ``c * g``; thresholds and curves are unchanged."""
        return RepresentationTwoSided(
            self.z_star, self.y_star, self.zeta, self.beta, self.alpha, self.f1.scaled(c),
            self.f2.scaled(c), self.smooth_fit_lower, self.smooth_fit_upper,
            self.payoff.scaled(c), self.pair, self.spec, c * self.f1_at_a,
            self.zeta_extrapolated, self.i_min, self.dual, self.trace)


def represent_two_sided(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec,
                        z_star: float, y_star: float,
                        grid_cfg: BetaGridConfig | None = None) -> RepresentationTwoSided:
    """Trace the curves for given thresholds and assemble the representation.

    Raises
    ------
    NotSupported
        If the matching curve reaches the upper truncation before ``a``, the
        configuration ``f2(b-) < f1(a+)`` that needs the mirrored crossover.
    """
    cfg = grid_cfg or BetaGridConfig()
    trace = trace_beta(payoff, pair, spec, z_star, y_star, cfg)
    if trace.escaped:
        raise NotSupported(f"matching curve leaves the truncated domain at i={trace.nodes[-1].i:.6g}"
                           " (f2(b-) < f1(a+)); mirrored crossover not implemented")
    f1c, f2c, alphac, report = f1_f2(payoff, pair, spec, trace, y_star, cfg)
    return RepresentationTwoSided(
        z_star=z_star, y_star=y_star, zeta=trace.zeta, beta=trace.beta, alpha=alphac,
        f1=f1c, f2=f2c, smooth_fit_lower=z_star not in payoff.kinks,
        smooth_fit_upper=y_star not in payoff.kinks, payoff=payoff, pair=pair, spec=spec,
        f1_at_a=trace.f1_at_a, zeta_extrapolated=trace.zeta_extrapolated,
        i_min=trace.nodes[-1].i, dual=report, trace=trace)


def solve_two_sided(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec,
                    search_cfg: TwoSidedSearch | None = None,
                    grid_cfg: BetaGridConfig | None = None) -> RepresentationTwoSided:
    """Optimal pair followed by the full representation."""
    opt = solve_optimal_pair(payoff, pair, spec, search_cfg)
    cfg = grid_cfg or BetaGridConfig()
    if cfg.upper is None:
        cfg = BetaGridConfig(**{**cfg.__dict__, "upper": opt.upper})
    rep = represent_two_sided(payoff, pair, spec, opt.z_star, opt.y_star, cfg)
    rep.smooth_fit_lower, rep.smooth_fit_upper = opt.smooth_fit_lower, opt.smooth_fit_upper
    return rep


# ---------------------------------------------------------------------------
# expected-supremum quadrature

def _phi_hat_density(pair, B, i, y, x):
    k = KilledSolutions(pair)
    ph_i = k.phi_hat(y, i)
    return (-B * pair.s_prime(i) - k.phi_hat_prime(y, i)) / ph_i**2 * k.phi_hat(y, x)


def _psi_hat_density(pair, B, alpha, m, x, a):
    # normalised by phi(alpha) so that alpha -> a reduces to the one-sided density
    if alpha <= a:
        return pair.psi_prime(m) * pair.psi(x) / pair.psi(m) ** 2
    phi_a = pair.phi(alpha)
    if not math.isfinite(phi_a):
        return pair.psi_prime(m) * pair.psi(x) / pair.psi(m) ** 2
    rho = pair.psi(alpha) / phi_a
    t_m = pair.psi(m) - rho * pair.phi(m)
    t_mp = pair.psi_prime(m) - rho * pair.phi_prime(m)
    t_x = pair.psi(x) - rho * pair.phi(x)
    return (-B * pair.s_prime(m) / phi_a + t_mp) / t_m**2 * t_x


# every BREAK_STRIDE-th interpolation node splits the expected-supremum quadrature
BREAK_STRIDE = 20


def j_value_two_sided(rep: RepresentationTwoSided, pair: FundamentalPair, x: float) -> float:
    """Expected supremum ``E_x[f1(I_T) 1 v f2(M_T) 1]`` by quadrature.

    Sums the lower-extremum part over ``i < min(x, z*)`` (or up to
    ``alpha(x)`` above ``y*``), the upper-extremum part over
    ``[max(x, beta-start), zeta)``, the one-sided tail beyond ``zeta`` and the
    exit mass below the deepest tabulated node.
    """
    B = pair.wronskian_B
    a = rep.spec.a
    z, y, zeta = rep.z_star, rep.y_star, rep.zeta
    if x <= z:
        i_up, m_lo = x, max(float(rep.beta(x)), y)
    elif x < y:
        i_up, m_lo = z, y
    else:
        i_up, m_lo = (float(rep.alpha(x)) if x < zeta else a), x

    total = 0.0
    i_lo = rep.i_min
    if i_up > i_lo:
        # interpolation nodes are breakpoints: the curves are only C1 across them
        f1j = list(rep.f1.x[::BREAK_STRIDE]) + rep.f1.jumps + rep.beta.jumps
        breaks = sorted({float(t) for t in f1j if i_lo < t < i_up})
        dens = lambda i: rep.f1(i) * _phi_hat_density(pair, B, i, float(rep.beta(i)), x)
        total += integrate(dens, i_lo, i_up, breaks, epsabs=1e-13, epsrel=1e-10, limit=400)
        # paths reaching below the deepest node before the curve
        beta_lo = float(rep.beta(i_lo))
        k = KilledSolutions(pair)
        if beta_lo > x:
            total += rep.f1_at_a * k.phi_hat(beta_lo, x) / k.phi_hat(beta_lo, i_lo)
    if m_lo < zeta:
        f2j = list(rep.f2.x[::BREAK_STRIDE]) + rep.f2.jumps + rep.alpha.jumps
        breaks = {float(t) for t in f2j if m_lo < t < zeta}
        # alpha has a root-type singularity at zeta: split geometrically toward it
        breaks.update(zeta - (zeta - m_lo) * 10.0 ** -np.arange(1, 9))
        breaks = sorted(t for t in breaks if m_lo < t < zeta)
        dens = lambda m: rep.f2(m) * _psi_hat_density(pair, B, float(rep.alpha(m)), m, x, a)
        total += integrate(dens, m_lo, zeta, breaks, epsabs=1e-13, epsrel=1e-10, limit=400)
    if math.isfinite(zeta):
        top = max(zeta, m_lo)
        total += pair.psi(x) * rep.payoff.g(top) / pair.psi(top)
    return float(total)


# ---------------------------------------------------------------------------
# stopping signal

@dataclass(frozen=True)
class SignalConfig:
    """Multistart settings for the inner infima of the stopping signal."""

    n_coarse: int = 60
    n_starts: int = 3
    xatol: float = 1e-12
    lower: float | None = None
    upper: float | None = None
    agree_tol: float = 1e-6


def h1(payoff: Payoff, pair: FundamentalPair, x: float, y: float) -> float:
    """Two-point ratio with the lower point collapsed onto ``x``."""
    return f1_ratio(payoff, pair, x, y)


def h2(payoff: Payoff, pair: FundamentalPair, x: float, z: float) -> float:
    """Two-point ratio with the upper point collapsed onto ``x``."""
    return f2_ratio(payoff, pair, z, x)


def _multistart_min(fn, grid, cfg: SignalConfig, kinks) -> float:
    vals = np.array([fn(t) for t in grid])
    order = np.argsort(vals)
    found = [float(vals[order[0]])]
    for j in order[: cfg.n_starts]:
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(fn, bounds=(lo, hi), method="bounded",
                              options={"xatol": cfg.xatol * max(1.0, abs(lo))})
        found.append(float(min(res.fun, vals[j])))
    best = min(found)
    if len(found) > 2 and abs(found[1] - best) > cfg.agree_tol * max(1.0, abs(best)):
        warnings.warn(f"multistart minima disagree ({found[1]:.6g} vs {best:.6g})",
                      OptimizationWarning, stacklevel=3)
    return best


def stopping_signal(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec, x: float,
                    minimize_cfg: SignalConfig | None = None) -> float:
    """Minimum of the four perturbed two-point branches at ``x``.

    ``x`` must not be a kink of the payoff.
    """
    cfg = minimize_cfg or SignalConfig()
    if x in payoff.kinks:
        raise DomainError("stopping signal is evaluated off the kink set")
    lo = cfg.lower if cfg.lower is not None else default_lower(spec)
    hi = cfg.upper if cfg.upper is not None else upper_truncation(payoff, pair, spec, max(x, 1.0))
    g, gp = payoff.g(x), payoff.g_prime(x)
    branch_a = float(g - gp * pair.psi(x) / pair.psi_prime(x))
    branch_b = float(g - gp * pair.phi(x) / pair.phi_prime(x))
    eps = 1e-7 * max(1.0, abs(x))
    cands = [branch_a, branch_b]
    if x - eps > lo:
        zs = scan_grid(lo, x - eps, cfg.n_coarse)
        cands.append(_multistart_min(lambda z: h2(payoff, pair, x, z), zs, cfg, payoff.kinks))
    if x + eps < hi:
        ys = scan_grid(x + eps, hi, cfg.n_coarse)
        cands.append(_multistart_min(lambda y: h1(payoff, pair, x, y), ys, cfg, payoff.kinks))
    return float(min(cands))


# ---------------------------------------------------------------------------
# reductions and bounds

@dataclass
class LimitReport:
    zeta: float
    max_rel_dev: float
    grid: np.ndarray
    one_sided_threshold: float | None


def one_sided_limit_check(payoff: Payoff, pair: FundamentalPair, spec: DiffusionSpec,
                          rep: RepresentationTwoSided, n: int = 200) -> LimitReport:
    """Compare ``f2`` beyond ``zeta`` with the one-sided ``f_hat``."""
    from .one_sided import solve_one_sided, OneSidedSearch

    start = rep.zeta if math.isfinite(rep.zeta) else rep.y_star
    hi = upper_truncation(payoff, pair, spec, max(start, 1.0))
    grid = np.array([t for t in scan_grid(start, hi, n) if t not in payoff.kinks])
    dev = 0.0
    for t in grid:
        a, b = float(rep.f2(t)), f_hat(payoff, pair, t)
        dev = max(dev, abs(a - b) / max(abs(b), 1e-12))
    try:
        y1 = solve_one_sided(payoff, pair, spec, OneSidedSearch()).y_star
    except Exception:
        y1 = None
    return LimitReport(start, dev, grid, y1)


def additive_upper_bound(rep: RepresentationTwoSided, pair: FundamentalPair, x: float) -> float:
    """``psi(x) int f2^+ psi'/psi^2 - phi(x) int f1^+ phi'/phi^2`` over the stop region."""
    up_lo = max(x, rep.y_star)
    up = pair.psi(x) * integrate(
        lambda m: max(float(rep.f2(m)), 0.0) * pair.psi_prime(m) / pair.psi(m) ** 2,
        up_lo, rep.spec.b, sorted(t for t in rep.f2.jumps if t > up_lo))
    lo_hi = min(x, rep.z_star)
    low = -pair.phi(x) * integrate(
        lambda i: max(float(rep.f1(i)), 0.0) * pair.phi_prime(i) / pair.phi(i) ** 2,
        rep.i_min, lo_hi, sorted(t for t in rep.f1.jumps if rep.i_min < t < lo_hi))
    return float(up + low)


def jensen_lower_bound(rep: RepresentationTwoSided, pair: FundamentalPair, x: float) -> float:
    """Larger of the two marginal expectations ``E f1(I_T)1`` and ``E f2(M_T)1``."""
    return float(max(additive_parts(rep, pair, x)))


def additive_parts(rep: RepresentationTwoSided, pair: FundamentalPair, x: float):
    up_lo = max(x, rep.y_star)
    up = pair.psi(x) * integrate(
        lambda m: float(rep.f2(m)) * pair.psi_prime(m) / pair.psi(m) ** 2,
        up_lo, rep.spec.b, sorted(t for t in rep.f2.jumps if t > up_lo))
    lo_hi = min(x, rep.z_star)
    low = -pair.phi(x) * integrate(
        lambda i: float(rep.f1(i)) * pair.phi_prime(i) / pair.phi(i) ** 2,
        rep.i_min, lo_hi, sorted(t for t in rep.f1.jumps if rep.i_min < t < lo_hi))
    return float(low), float(up)
