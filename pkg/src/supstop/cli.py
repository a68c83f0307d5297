"""Command-line front end: solve, verify, laws and emit-default-config."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (
    ProblemConfig,
    build_diffusion,
    build_payoff,
    build_sim_config,
    dump_config,
    load_config,
)
from .errors import ConfigError, DomainError, SupStopError
from .laws import inf_cdf, joint_cdf, sup_cdf
from .one_sided import OneSidedSearch, f_hat_integral, j_value, solve_one_sided
from .simulate import (
    Scheme,
    empirical_law_check,
    one_sided_target,
    simulate_expected_sup,
    simulate_extrema,
    two_sided_target,
)
from .two_sided import (
    BetaGridConfig,
    TwoSidedSearch,
    j_value_two_sided,
    represent_two_sided,
    solve_optimal_pair,
    stopping_signal,
)

log = logging.getLogger("supstop")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def render_records(rows: list[dict], fmt: str) -> str:
    """CSV with a header row (17 significant digits) or a JSON array."""
    if fmt == "json":
        return json.dumps(_jsonable(rows), indent=2)
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _write(out: Path, name: str, rows: list[dict], fmt: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.{fmt}"
    path.write_text(render_records(rows, fmt))
    return path


# ---------------------------------------------------------------------------
# solving

@dataclass
class Problem:
    cfg: ProblemConfig
    spec: object
    pair: object
    payoff: object


@dataclass
class Solution:
    mode: str
    rep: object
    summary: dict
    table: list[dict] = field(default_factory=list)

    def value(self, x: float) -> float:
        return float(self.rep.value(x))

    def f(self, x: float) -> float:
        return float(self.rep.f(x))


def build_problem(cfg: ProblemConfig) -> Problem:
    spec, pair = build_diffusion(cfg.diffusion)
    return Problem(cfg, spec, pair, build_payoff(cfg.payoff, spec, pair))


def _grid_cfg(cfg: ProblemConfig) -> BetaGridConfig:
    s = cfg.solver
    return BetaGridConfig(n_nodes=s.beta_nodes, depth=s.beta_depth, dual_check=s.dual_check)


def solve_problem(prob: Problem, z_star: float | None = None, y_star: float | None = None) -> Solution:
    """Solve the configured problem; given thresholds replace the solved ones."""
    s = prob.cfg.solver
    if s.mode == "one_sided":
        rep = solve_one_sided(prob.payoff, prob.pair, prob.spec,
                              OneSidedSearch(lower=s.lower, upper=s.upper, n_grid=s.n_grid))
        if y_star is not None:
            rep = dataclasses.replace(rep, y_star=float(y_star),
                                      smooth_fit=y_star not in prob.payoff.kinks)
        summary = dict(mode="one_sided", y_star=rep.y_star, smooth_fit=rep.smooth_fit,
                       jump_at_boundary=rep.jump_at_boundary,
                       monotone_on_stop_region=rep.monotone_on_stop_region)
        return Solution("one_sided", rep, summary)
    opt = solve_optimal_pair(prob.payoff, prob.pair, prob.spec,
                             TwoSidedSearch(lower=s.lower, upper=s.upper, xtol=s.xtol))
    z = opt.z_star if z_star is None else float(z_star)
    y = opt.y_star if y_star is None else float(y_star)
    gcfg = dataclasses.replace(_grid_cfg(prob.cfg), upper=opt.upper)
    rep = represent_two_sided(prob.payoff, prob.pair, prob.spec, z, y, gcfg)
    if z_star is None and y_star is None:
        rep.smooth_fit_lower, rep.smooth_fit_upper = opt.smooth_fit_lower, opt.smooth_fit_upper
    summary = dict(mode="two_sided", z_star=rep.z_star, y_star=rep.y_star, zeta=rep.zeta,
                   zeta_extrapolated=rep.zeta_extrapolated, f1_at_a=rep.f1_at_a,
                   smooth_fit=rep.smooth_fit_lower and rep.smooth_fit_upper,
                   smooth_fit_lower=rep.smooth_fit_lower, smooth_fit_upper=rep.smooth_fit_upper,
                   method=opt.method, dual_max_rel_dev=rep.dual.max_rel_dev)
    return Solution("two_sided", rep, summary)


def _table_range(sol: Solution, prob: Problem) -> tuple[float, float]:
    t = prob.cfg.solver.table
    if sol.mode == "one_sided":
        lo, hi = 0.5 * sol.rep.y_star, 2.0 * sol.rep.y_star
    else:
        zeta = sol.rep.zeta if math.isfinite(sol.rep.zeta) else sol.rep.y_star
        lo, hi = 0.5 * sol.rep.z_star, max(2.0 * sol.rep.y_star, 1.2 * zeta)
    a = prob.spec.a
    if math.isfinite(a) and lo <= a:
        lo = a + 0.5 * (min(hi, sol.rep.y_star) - a) * 1e-2
    return (t.lo if t.lo is not None else lo), (t.hi if t.hi is not None else hi)


def tabulate(sol: Solution, prob: Problem) -> list[dict]:
    lo, hi = _table_range(sol, prob)
    rows = []
    for x in np.linspace(lo, hi, prob.cfg.solver.table.n):
        x = float(x)
        row = {"x": x, "V": sol.value(x)}
        if sol.mode == "one_sided":
            stop = x >= sol.rep.y_star
            row.update(f=sol.f(x) if stop else math.nan, region="stop" if stop else "continue",
                       f_hat=sol.rep.f_hat(x))
        else:
            rep = sol.rep
            low, up = x <= rep.z_star, x >= rep.y_star
            row.update(f=sol.f(x), region="stop" if (low or up) else "continue",
                       f1=float(rep.f1(x)) if low else math.nan,
                       f2=float(rep.f2(x)) if up else math.nan,
                       beta=float(rep.beta(x)) if low else math.nan,
                       alpha=float(rep.alpha(x)) if up else math.nan)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# verification battery

@dataclass
class Check:
    name: str
    status: str
    observed: float
    tolerance: float
    detail: str = ""

    def as_row(self) -> dict:
        return dataclasses.asdict(self)


def _j(sol: Solution, x: float) -> float:
    if sol.mode == "one_sided":
        return j_value(sol.rep, sol.rep.pair, x)
    return j_value_two_sided(sol.rep, sol.rep.pair, x)


def _mc_status(est: float, se: float, target: float, vcfg) -> tuple[str, float]:
    dev = abs(est - target)
    if vcfg.n_se * se > vcfg.mc_power_tol * max(1.0, abs(target)):
        return "inconclusive (s.e. too large)", dev
    return ("pass" if dev <= vcfg.n_se * se else "fail"), dev


def run_verify(prob: Problem, sim_cfg) -> list[Check]:
    v = prob.cfg.verify
    checks: list[Check] = []
    best = solve_problem(prob)
    injected = v.inject_z_star is not None or v.inject_y_star is not None
    try:
        sol = solve_problem(prob, v.inject_z_star, v.inject_y_star) if injected else best
    except SupStopError as exc:
        return [Check("representation", "fail", math.nan, 0.0, f"{type(exc).__name__}: {exc}")]
    lo, hi = _table_range(best, prob)
    kinks = set(prob.payoff.kinks)

    # J = V on a grid
    worst, worst_x, err = 0.0, None, ""
    for x in np.linspace(lo, hi, v.jv_points):
        x = float(x)
        if x in kinks:
            continue
        try:
            j, val = _j(sol, x), best.value(x)
        except SupStopError as exc:
            err = f"{type(exc).__name__} at x={x}: {exc}"
            worst = math.inf
            break
        dev = abs(j - val) / max(abs(val), 1e-12)
        if dev > worst:
            worst, worst_x = dev, x
    checks.append(Check("J=V quadrature", "pass" if worst <= v.jv_rtol else "fail", worst,
                        v.jv_rtol, err or f"worst at x={worst_x}"))

    # dual formulas
    if sol.mode == "two_sided":
        dev = sol.rep.dual.max_rel_dev if sol.rep.dual.checked else math.nan
        checks.append(Check("f1 closed vs integral", "pass" if dev <= v.dual_rtol else "fail",
                            dev, v.dual_rtol, f"{sol.rep.dual.checked} nodes"))
    else:
        y = sol.rep.y_star
        dev = 0.0
        for x in np.linspace(y, hi, 7)[1:]:
            if float(x) in kinks:
                continue
            a = f_hat_integral(prob.payoff, prob.pair, prob.spec, y, float(x))
            b = sol.rep.f_hat(float(x))
            dev = max(dev, abs(a - b) / max(abs(b), 1e-12))
        checks.append(Check("f_hat closed vs integral", "pass" if dev <= v.dual_rtol else "fail",
                            dev, v.dual_rtol))

    # stopping signal
    if sol.mode == "two_sided" and not injected:
        rep = sol.rep
        k = max(v.signal_points // 2, 1)
        pts = list(np.linspace(rep.i_min + 0.25 * (rep.z_star - rep.i_min), rep.z_star, k, endpoint=False))
        pts += list(np.linspace(rep.y_star, hi, v.signal_points - k + 1)[1:])
        worst = 0.0
        for x in pts:
            x = float(x)
            if x in kinks:
                continue
            gam, fx = stopping_signal(prob.payoff, prob.pair, prob.spec, x), rep.f(x)
            worst = max(worst, abs(gam - fx) / max(1.0, abs(fx)))
        checks.append(Check("stopping signal = f on stop region",
                            "pass" if worst <= v.signal_tol else "fail", worst, v.signal_tol))

    # Monte Carlo
    mc_ok = sim_cfg.scheme == Scheme.EULER_MARUYAMA or prob.spec.family in ("gbm", "bm")
    if mc_ok:
        if v.mc_points is not None:
            xs = v.mc_points
        elif best.mode == "one_sided":
            xs = [0.8 * best.rep.y_star, 1.2 * best.rep.y_star]
        else:
            xs = [0.9 * best.rep.z_star, 0.5 * (best.rep.z_star + best.rep.y_star), 1.1 * best.rep.y_star]
        target = one_sided_target(sol.rep) if sol.mode == "one_sided" else two_sided_target(sol.rep)
        for x in xs:
            est = simulate_expected_sup(spec=prob.spec, pair=prob.pair, x=float(x), cfg=sim_cfg, **target)
            val = best.value(float(x))
            status, dev = _mc_status(est.estimate, est.std_error, val, v)
            checks.append(Check(f"MC expected sup at x={_fmt(float(x))}", status, dev,
                                v.n_se * est.std_error, f"estimate {_fmt(est.estimate)} vs V {_fmt(val)}"))
        if v.law_probes and v.law_x is not None:
            rep = empirical_law_check(prob.spec, prob.pair, v.law_x, v.law_probes, sim_cfg, n_se=v.n_se)
            for row in rep.rows:
                name = f"law probe (i={_fmt(row.i)}, m={_fmt(row.m)})"
                if not row.valid:
                    checks.append(Check(name, "skipped", math.nan, math.nan, row.reason))
                    continue
                se = max(row.joint_se, row.sup_se, row.inf_se)
                dev = max(abs(row.joint - row.joint_mc), abs(row.sup - row.sup_mc),
                          abs(row.inf - row.inf_mc))
                if v.n_se * se > v.mc_power_tol:
                    status = "inconclusive (s.e. too large)"
                else:
                    status = "pass" if row.ok else "fail"
                checks.append(Check(name, status, dev, v.n_se * se + rep.allowance))
    return checks


# ---------------------------------------------------------------------------
# laws

def tabulate_laws(prob: Problem, sim_cfg) -> list[dict]:
    rows = []
    samples = {}
    for x, i, m in prob.cfg.laws.probes:
        row = {"x": x, "i": i, "m": m}
        try:
            # a missing lower level gives the sup marginal alone
            row.update(sup_cdf=sup_cdf(prob.pair, x, m))
            if i is not None:
                row.update(inf_cdf=inf_cdf(prob.pair, x, i), joint_cdf=joint_cdf(prob.pair, x, i, m))
            row["status"] = "ok"
        except DomainError as exc:
            log.warning("probe (%s, %s, %s) skipped: %s", x, i, m, exc)
            rows.append({"x": x, "i": i, "m": m, "status": f"skipped: {exc}"})
            continue
        if prob.cfg.laws.empirical:
            if x not in samples:
                samples[x] = simulate_extrema(prob.spec, x, sim_cfg)
            smp = samples[x]
            n = smp.n
            events = [("sup", smp.sup <= m)]
            if i is not None:
                events += [("inf", smp.inf <= i), ("joint", (smp.inf <= i) & (smp.sup <= m))]
            for key, ev in events:
                p = float(np.mean(ev))
                row[f"{key}_mc"] = p
                row[f"{key}_se"] = math.sqrt(max(p * (1 - p), 0.0) / n)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# entry point

def _provenance(exc: BaseException) -> tuple[str, str]:
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if "supstop" in f.filename]
    if not frames:
        return "supstop", "?"
    last = frames[-1]
    return Path(last.filename).stem, last.name


def _error(kind: str, exc: BaseException) -> None:
    module, op = _provenance(exc)
    record = {"error": type(exc).__name__, "kind": kind, "module": module, "op": op,
              "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="supstop",
                                description="Optimal stopping thresholds and expected-supremum representations")
    p.add_argument("command", nargs="?", choices=["solve", "verify", "laws", "emit-default-config"])
    p.add_argument("--config", help="YAML or JSON problem file")
    p.add_argument("--out", help="output directory (emit-default-config: output file)")
    p.add_argument("--format", choices=["csv", "json"], help="output format (overrides config)")
    p.add_argument("--seed", type=int, help="simulation seed (overrides config)")
    p.add_argument("--threads", type=int, help="simulation threads (overrides config)")
    p.add_argument("--emit-default-config", action="store_true", dest="emit_default",
                   help="same as the emit-default-config command")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = "emit-default-config" if args.emit_default else args.command
    if command is None:
        print("supstop: a command is required", file=sys.stderr)
        return EXIT_CONFIG

    if command == "emit-default-config":
        fmt = "json" if (args.format == "json" or (args.out or "").endswith(".json")) else "yaml"
        text = dump_config(ProblemConfig(), fmt)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    try:
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        sim_cfg = build_sim_config(cfg.simulation, args.seed, args.threads)
        prob = build_problem(cfg)
    except ConfigError as exc:
        _error("config", exc)
        return EXIT_CONFIG
    except SupStopError as exc:
        _error("numeric", exc)
        return EXIT_NUMERIC
    fmt = args.format or cfg.output.format
    out = Path(args.out or cfg.output.directory)

    try:
        if command == "solve":
            sol = solve_problem(prob)
            table = tabulate(sol, prob)
            _write(out, "summary", [sol.summary], fmt)
            _write(out, "table", table, fmt)
            print(json.dumps(_jsonable(sol.summary)))
            return EXIT_OK
        if command == "verify":
            checks = run_verify(prob, sim_cfg)
            rows = [c.as_row() for c in checks]
            _write(out, "verify", rows, fmt)
            for c in checks:
                print(f"{c.status:>30}  {c.name}  observed={_fmt(c.observed)} tol={_fmt(c.tolerance)}")
            return EXIT_VERIFY if any(c.status == "fail" for c in checks) else EXIT_OK
        rows = tabulate_laws(prob, sim_cfg)
        _write(out, "laws", rows, fmt)
        return EXIT_OK
    except (SupStopError, ArithmeticError, ValueError) as exc:
        _error("numeric", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
