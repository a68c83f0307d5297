"""Monte Carlo paths to an independent exponential time and the estimators
built on their running extrema."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .diffusion import Boundary, DiffusionSpec
from .errors import ParamError, SchemeError
from .fundamental import FundamentalPair
from .laws import inf_cdf, joint_cdf, sup_cdf


class Scheme(str, enum.Enum):
    EXACT_GBM = "exact_gbm"
    EULER_MARUYAMA = "euler_maruyama"


@dataclass(frozen=True)
class PathSimConfig:
    """Path simulation settings.

    Paths are generated in blocks of ``block_size``; block ``k`` draws from a
    Philox stream keyed by ``(seed, k)``, so results do not depend on
    ``threads``. With ``antithetic`` the second half of each block reuses the
    clock and bridge draws of the first half with negated increments.
    """

    scheme: Scheme = Scheme.EXACT_GBM
    dt: float = 1e-2
    n_paths: int = 100_000
    seed: int = 12345
    antithetic: bool = False
    threads: int = 1
    block_size: int = 4096
    max_discard_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ParamError(f"dt must be positive, got {self.dt}")
        if self.n_paths < 1:
            raise ParamError(f"n_paths must be at least 1, got {self.n_paths}")
        if self.block_size < 2 or self.block_size % 2:
            raise ParamError("block_size must be an even number >= 2")
        if self.threads < 1:
            raise ParamError("threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ParamError("seed must be a 64-bit unsigned integer")


@dataclass
class ExtremaSample:
    """Running extrema and terminal values of the simulated paths.

    ``pair_index`` groups antithetic partners (equal index); without
    antithetic sampling every path is its own group.
    """

    inf: np.ndarray
    sup: np.ndarray
    terminal: np.ndarray
    pair_index: np.ndarray
    discarded: int
    x: float

    @property
    def n(self) -> int:
        return len(self.sup)


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed << 64) | block))


def _clock(rng, n, horizon, r):
    if horizon is not None:
        return np.full(n, float(horizon))
    return -np.log1p(-rng.random(n)) / r


def _exact_block(spec: DiffusionSpec, x: float, n: int, cfg: PathSimConfig, rng, horizon):
    """Exact stepping of the log process (GBM) or the process itself (drifted BM)."""
    mu, sig = spec.params["mu"], spec.params["sigma"]
    log_space = spec.family == "gbm"
    nu = mu - 0.5 * sig * sig if log_space else mu
    y0 = math.log(x) if log_space else x
    base = n // 2 if cfg.antithetic else n
    t = _clock(rng, base, horizon, spec.r)
    steps = np.maximum(np.ceil(t / cfg.dt).astype(np.int64), 1)
    total = int(steps.sum())
    owner = np.repeat(np.arange(base), steps)
    start = np.concatenate(([0], np.cumsum(steps)[:-1]))
    local = np.arange(total) - start[owner]
    h = np.minimum(cfg.dt, t[owner] - local * cfg.dt)
    h = np.where(h > 0, h, cfg.dt * 1e-300)
    z = rng.standard_normal(total)
    # uniforms for the bridge maximum and minimum of every step
    u_hi = rng.random(total)
    u_lo = rng.random(total)
    sq = sig * np.sqrt(h)

    def run(sign):
        inc = nu * h + sign * sq * z
        csum = np.cumsum(inc)
        before = csum - inc
        seg0 = before[start]
        y_start = y0 + before - seg0[owner]
        y_end = y_start + inc
        spread_hi = np.sqrt(inc * inc - 2.0 * sq * sq * np.log1p(-u_hi))
        spread_lo = np.sqrt(inc * inc - 2.0 * sq * sq * np.log1p(-u_lo))
        top = 0.5 * (y_start + y_end + spread_hi)
        bot = 0.5 * (y_start + y_end - spread_lo)
        hi = np.maximum.reduceat(top, start)
        lo = np.minimum.reduceat(bot, start)
        end = y_end[start + steps - 1]
        if log_space:
            return np.exp(lo), np.exp(hi), np.exp(end)
        return lo, hi, end

    lo, hi, end = run(1.0)
    idx = np.arange(base)
    if cfg.antithetic:
        lo2, hi2, end2 = run(-1.0)
        lo, hi, end = np.concatenate((lo, lo2)), np.concatenate((hi, hi2)), np.concatenate((end, end2))
        idx = np.concatenate((idx, idx))
    return lo, hi, end, idx, 0


def _euler_block(spec: DiffusionSpec, x: float, n: int, cfg: PathSimConfig, rng, horizon):
    """Explicit Euler stepping; extrema are taken over grid points only."""
    a, b = spec.interval
    base = n // 2 if cfg.antithetic else n
    t = _clock(rng, base, horizon, spec.r)
    if cfg.antithetic:
        t = np.concatenate((t, t))
    m = len(t)
    sign = np.ones(m)
    if cfg.antithetic:
        sign[base:] = -1.0
    pos = np.full(m, float(x))
    lo, hi = pos.copy(), pos.copy()
    elapsed = np.zeros(m)
    alive = np.ones(m, dtype=bool)
    absorbed = np.zeros(m, dtype=bool)
    bad = np.zeros(m, dtype=bool)
    while True:
        act = np.flatnonzero(alive & ~absorbed & ~bad & (elapsed < t))
        if act.size == 0:
            break
        h = np.minimum(cfg.dt, t[act] - elapsed[act])
        zb = rng.standard_normal(base)
        z = np.concatenate((zb, zb)) if cfg.antithetic else zb
        xs = pos[act]
        new = xs + spec.mu(xs) * h + spec.sigma(xs) * np.sqrt(h) * sign[act] * z[act]
        elapsed[act] += h
        below, above = new <= a, new >= b
        for mask, edge, kind in ((below, a, spec.boundary_a), (above, b, spec.boundary_b)):
            if not mask.any():
                continue
            if kind == Boundary.REGULAR_REFLECTED:
                new[mask] = 2.0 * edge - new[mask]
            elif kind in (Boundary.EXIT, Boundary.REGULAR_KILLED):
                new[mask] = edge
                absorbed[act[mask]] = True
            else:
                bad[act[mask]] = True
        pos[act] = new
        lo[act] = np.minimum(lo[act], new)
        hi[act] = np.maximum(hi[act], new)
    keep = ~bad
    idx = np.concatenate((np.arange(base), np.arange(base))) if cfg.antithetic else np.arange(m)
    if cfg.antithetic:
        # drop both members of a pair when either is discarded
        pair_bad = bad[:base] | bad[base:]
        keep = ~np.concatenate((pair_bad, pair_bad))
    return lo[keep], hi[keep], pos[keep], idx[keep], int(m - keep.sum())


def simulate_extrema(spec: DiffusionSpec, x: float, cfg: PathSimConfig,
                     horizon: float | None = None) -> ExtremaSample:
    """Simulate ``cfg.n_paths`` paths from ``x`` up to an Exp(r) time (or ``horizon``).

    Raises
    ------
    SchemeError
        If the exact scheme is requested for a family without exact
        stepping, or if Euler discards more than ``max_discard_fraction``
        of the paths.
    """
    if not spec.contains(x):
        raise ParamError(f"start {x} outside the state interval")
    if cfg.scheme == Scheme.EXACT_GBM:
        if spec.family not in ("gbm", "bm"):
            raise SchemeError(f"exact stepping is not available for family {spec.family!r}")
        block_fn = _exact_block
    else:
        block_fn = _euler_block
    sizes = []
    left = cfg.n_paths + (cfg.n_paths % 2 if cfg.antithetic else 0)
    while left > 0:
        sizes.append(min(cfg.block_size, left))
        left -= sizes[-1]

    def work(k):
        return block_fn(spec, x, sizes[k], cfg, _rng(cfg.seed, k), horizon)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]
    offsets = np.cumsum([0] + sizes[:-1])
    lo = np.concatenate([p[0] for p in parts])
    hi = np.concatenate([p[1] for p in parts])
    end = np.concatenate([p[2] for p in parts])
    idx = np.concatenate([p[3] + off for p, off in zip(parts, offsets)])
    discarded = sum(p[4] for p in parts)
    if discarded > cfg.max_discard_fraction * cfg.n_paths:
        raise SchemeError(f"{discarded} of {cfg.n_paths} Euler paths left the state interval")
    if len(hi) == 0:
        raise SchemeError("no path survived")
    return ExtremaSample(lo, hi, end, idx, discarded, float(x))


def _mean_se(values: np.ndarray, groups: np.ndarray) -> tuple[float, float]:
    """Mean and standard error, averaging antithetic partners first."""
    if len(np.unique(groups)) < len(groups):
        _, inv = np.unique(groups, return_inverse=True)
        sums = np.bincount(inv, weights=values)
        counts = np.bincount(inv)
        values = sums / counts
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return mean, math.inf
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def _evaluate(fn: Callable, xs: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(xs), dtype=float)
        if out.shape == xs.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(float(t))) for t in xs])


# ---------------------------------------------------------------------------
# expected supremum

@dataclass
class SupEstimate:
    """Expected-supremum estimate with its running-extremum shortcut."""

    estimate: float
    std_error: float
    shortcut: float | None = None
    shortcut_std_error: float | None = None
    n_paths: int = 0
    discarded: int = 0

    def __iter__(self):
        return iter((self.estimate, self.std_error))


@dataclass(frozen=True)
class Monotone:
    """A monotone representation branch ``f`` active on one side of ``edge``.

    ``side="lower"`` means active on ``(a, edge]`` (used with the running
    minimum), ``side="upper"`` active on ``[edge, b)`` (running maximum).
    """

    f: Callable
    edge: float
    side: str


def _table(fn, lo: float, hi: float, kinks: Sequence[float], n: int):
    """Nodes on ``[lo, hi]`` with each inner kink doubled (left and right
    limit) and ``fn`` evaluated there, for piecewise-linear lookup."""
    if hi <= lo:
        pts = np.array([lo])
        return pts, _evaluate(fn, pts)
    grid = np.geomspace(lo, hi, n) if lo > 0 else np.linspace(lo, hi, n)
    inner = sorted(k for k in kinks if lo < k < hi)
    eps = [1e-12 * max(1.0, abs(k)) for k in inner]
    pts = np.concatenate((grid, [k - e for k, e in zip(inner, eps)], [k + e for k, e in zip(inner, eps)]))
    pts = np.unique(pts)
    return pts, _evaluate(fn, pts)


def _range_sup(f, region, sample: ExtremaSample, n_table: int, kinks: Sequence[float]):
    """``sup`` of ``f 1_region`` over the visited range ``[I_T, M_T]``.

    A continuous path visits every point between its extrema, so the running
    supremum over time equals the supremum over the range. Cumulative maxima
    of a table outward from the start point are combined with the
    interpolated value at the extremum itself.
    """
    x = sample.x

    def masked(pts):
        pts = np.asarray(pts, dtype=float)
        inside = np.asarray(_evaluate(region, pts), dtype=bool)
        out = np.zeros_like(pts)
        if inside.any():
            out[inside] = _evaluate(f, pts[inside])
        return out

    up_grid, up_vals = _table(masked, x, float(sample.sup.max()), kinks, n_table)
    up_run = np.maximum.accumulate(up_vals)
    pos = np.clip(np.searchsorted(up_grid, sample.sup, side="right") - 1, 0, len(up_grid) - 1)
    upper = np.maximum(up_run[pos], np.interp(sample.sup, up_grid, up_vals))

    lo_grid, lo_vals = _table(masked, float(sample.inf.min()), x, kinks, n_table)
    lo_run = np.maximum.accumulate(lo_vals[::-1])[::-1]
    pos = np.clip(np.searchsorted(lo_grid, sample.inf, side="left"), 0, len(lo_grid) - 1)
    lower = np.maximum(lo_run[pos], np.interp(sample.inf, lo_grid, lo_vals))
    return np.maximum(upper, lower)


def _branch_values(br: "Monotone", ext: np.ndarray, kinks: Sequence[float], n_table: int) -> np.ndarray:
    hit = ext <= br.edge if br.side == "lower" else ext >= br.edge
    out = np.zeros(len(ext))
    if not hit.any():
        return out
    sel = ext[hit]
    lo, hi = float(sel.min()), float(sel.max())
    ks = list(kinks) + [br.edge]
    grid, vals = _table(br.f, lo, hi, ks, n_table)
    out[hit] = np.interp(sel, grid, vals)
    return out


def simulate_expected_sup(f: Callable, region_indicator: Callable, spec: DiffusionSpec,
                          pair: FundamentalPair | None, x: float, cfg: PathSimConfig,
                          branches: Sequence[Monotone] = (), kinks: Sequence[float] = (),
                          n_table: int = 4001, sample: ExtremaSample | None = None) -> SupEstimate:
    """Estimate ``E_x[sup_{t <= T} f(X_t) 1_region(X_t)]`` by simulation.

    ``f`` and ``region_indicator`` may be scalar or vectorized. When monotone
    ``branches`` are supplied, the shortcut ``max_k f_k(extremum_k) 1`` is
    estimated from the same paths. ``pair`` is accepted for interface
    symmetry and is not needed by the estimator.
    """
    smp = sample if sample is not None else simulate_extrema(spec, x, cfg)
    vals = _range_sup(f, region_indicator, smp, n_table, kinks)
    est, se = _mean_se(vals, smp.pair_index)
    short = short_se = None
    if branches:
        best = np.zeros(smp.n)
        for br in branches:
            ext = smp.inf if br.side == "lower" else smp.sup
            best = np.maximum(best, _branch_values(br, ext, kinks, n_table))
        short, short_se = _mean_se(best, smp.pair_index)
    return SupEstimate(est, se, short, short_se, smp.n, smp.discarded)


def one_sided_target(rep) -> dict:
    """Arguments of :func:`simulate_expected_sup` for a one-sided representation."""
    y = rep.y_star
    f = lambda t: rep.f_hat(float(t))
    return dict(f=f, region_indicator=lambda t: np.asarray(t) >= y,
                branches=(Monotone(f, y, "upper"),) if rep.monotone_on_stop_region else (),
                kinks=tuple(rep.payoff.kinks) + (y,))


def two_sided_target(rep) -> dict:
    """Arguments of :func:`simulate_expected_sup` for a two-sided representation."""
    z, y = rep.z_star, rep.y_star
    f = lambda t: rep.f(float(t))
    region = lambda t: (np.asarray(t) <= z) | (np.asarray(t) >= y)
    jumps = tuple(rep.f1.jumps) + tuple(rep.f2.jumps) + (z, y)
    return dict(f=f, region_indicator=region,
                branches=(Monotone(rep.f1, z, "lower"), Monotone(rep.f2, y, "upper")),
                kinks=jumps)


# ---------------------------------------------------------------------------
# law checks, resolvent and supermartingale checks

@dataclass
class ProbeRow:
    i: float
    m: float
    valid: bool
    reason: str = ""
    joint: float = math.nan
    joint_mc: float = math.nan
    joint_se: float = math.nan
    sup: float = math.nan
    sup_mc: float = math.nan
    sup_se: float = math.nan
    inf: float = math.nan
    inf_mc: float = math.nan
    inf_se: float = math.nan
    ok: bool = False


@dataclass
class LawCheckReport:
    x: float
    rows: list[ProbeRow]
    allowance: float
    n_paths: int

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows if r.valid)


def _freq(event: np.ndarray, groups: np.ndarray) -> tuple[float, float]:
    p, se = _mean_se(event.astype(float), groups)
    return p, se


def empirical_law_check(spec: DiffusionSpec, pair: FundamentalPair, x: float,
                        probe_points: Sequence[tuple[float, float]], cfg: PathSimConfig,
                        allowance: float | None = None, n_se: float = 3.0,
                        sample: ExtremaSample | None = None) -> LawCheckReport:
    """Compare empirical extremum frequencies with the analytic CDFs.

    Each probe ``(i, m)`` with ``i < x < m`` is checked for the joint CDF and
    both marginals; the bound is ``n_se`` standard errors plus a
    discretization ``allowance`` (zero for the bridge-corrected exact
    scheme, ``sqrt(dt)`` for Euler by default). Invalid probes are reported,
    not raised.
    """
    if allowance is None:
        allowance = 0.0 if cfg.scheme == Scheme.EXACT_GBM else math.sqrt(cfg.dt)
    smp = sample if sample is not None else simulate_extrema(spec, x, cfg)
    rows = []
    for i, m in probe_points:
        if not i < x < m:
            rows.append(ProbeRow(i, m, False, f"probe needs i < x < m (x={x})"))
            continue
        row = ProbeRow(i, m, True)
        row.joint = joint_cdf(pair, x, i, m)
        row.joint_mc, row.joint_se = _freq((smp.inf <= i) & (smp.sup <= m), smp.pair_index)
        row.sup = sup_cdf(pair, x, m)
        row.sup_mc, row.sup_se = _freq(smp.sup <= m, smp.pair_index)
        row.inf = inf_cdf(pair, x, i)
        row.inf_mc, row.inf_se = _freq(smp.inf <= i, smp.pair_index)
        row.ok = all(abs(mc - an) <= n_se * se + allowance for an, mc, se in
                     ((row.joint, row.joint_mc, row.joint_se), (row.sup, row.sup_mc, row.sup_se),
                      (row.inf, row.inf_mc, row.inf_se)))
        rows.append(row)
    return LawCheckReport(float(x), rows, allowance, smp.n)


@dataclass
class TrendReport:
    dts: list[float]
    bias: list[float]
    std_errors: list[float]
    monotone: bool


def discretization_trend(spec: DiffusionSpec, pair: FundamentalPair, x: float, m: float,
                         cfg: PathSimConfig, halvings: int = 2) -> TrendReport:
    """Bias of the empirical ``P_x(M_T <= m)`` as ``dt`` is halved repeatedly."""
    exact = sup_cdf(pair, x, m)
    dts, bias, ses = [], [], []
    dt = cfg.dt
    for _ in range(halvings + 1):
        c = PathSimConfig(**{**cfg.__dict__, "dt": dt})
        smp = simulate_extrema(spec, x, c)
        p, se = _freq(smp.sup <= m, smp.pair_index)
        dts.append(dt); bias.append(p - exact); ses.append(se)
        dt *= 0.5
    mags = np.abs(bias)
    return TrendReport(dts, bias, ses, bool(np.all(np.diff(mags) < 0)))


def simulate_resolvent(pi: Callable, spec: DiffusionSpec, x: float,
                       cfg: PathSimConfig) -> tuple[float, float]:
    """``(R_r pi)(x) = E_x[pi(X_T)] / r`` with ``T ~ Exp(r)``; mean and standard error."""
    smp = simulate_extrema(spec, x, cfg)
    est, se = _mean_se(_evaluate(pi, smp.terminal), smp.pair_index)
    return est / spec.r, se / spec.r


@dataclass
class SupermartingaleReport:
    x: float
    delta: float
    value: float
    discounted_mean: float
    std_error: float
    ok: bool


def supermartingale_check(value: Callable, spec: DiffusionSpec, xs: Sequence[float], delta: float,
                          cfg: PathSimConfig, n_se: float = 3.0) -> list[SupermartingaleReport]:
    """One-step check ``V(x) >= E_x[exp(-r delta) V(X_delta)]`` within ``n_se`` errors."""
    out = []
    for x in xs:
        smp = simulate_extrema(spec, x, cfg, horizon=delta)
        vals = math.exp(-spec.r * delta) * _evaluate(value, smp.terminal)
        mean, se = _mean_se(vals, smp.pair_index)
        v = float(value(x))
        out.append(SupermartingaleReport(float(x), delta, v, mean, se, v >= mean - n_se * se))
    return out
