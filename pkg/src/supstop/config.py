"""Strict problem configuration and the builders that turn it into objects."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
import sympy
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .diffusion import Boundary, DiffusionSpec, gbm_spec, logistic_spec
from .errors import ConfigError
from .fundamental import FundamentalPair, ODEConfig, make_gbm_pair, make_logistic_pair, make_numeric_pair
from .payoffs import (
    Payoff,
    asym_capped_straddle_payoff,
    call_payoff,
    capped_call_payoff,
    capped_straddle_payoff,
    custom_payoff,
    max_with_floor_payoff,
    resolvent_payoff,
)
from .simulate import PathSimConfig, Scheme


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DiffusionConfig(_Strict):
    kind: Literal["gbm", "logistic", "custom"] = "gbm"
    parameters: dict[str, float] = Field(default_factory=lambda: {"mu": 0.15, "sigma": math.sqrt(0.1)})
    r: float = 0.4
    # custom diffusions: drift and volatility as expressions in x
    drift: str | None = None
    volatility: str | None = None
    interval: tuple[float, float] | None = None
    boundary_a: Boundary = Boundary.NATURAL
    boundary_b: Boundary = Boundary.NATURAL
    truncation: tuple[float, float] | None = None
    reference: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        need = {"gbm": {"mu", "sigma"}, "logistic": {"mu", "gamma", "sigma"}}.get(self.kind)
        if need is not None and set(self.parameters) != need:
            raise ValueError(f"{self.kind} needs parameters {sorted(need)}, got {sorted(self.parameters)}")
        if self.kind == "custom":
            if not (self.drift and self.volatility and self.interval and self.truncation):
                raise ValueError("custom diffusion needs drift, volatility, interval and truncation")
        return self


_PAYOFF_PARAMS = {
    "call": {"strike"},
    "capped_call": {"strike", "cap"},
    "capped_straddle": {"strike", "cap"},
    "asym_capped_straddle": {"strike", "cap_low", "cap_high"},
    "max_with_floor": {"floor"},
    "resolvent": set(),
    "custom": set(),
}


class PayoffConfig(_Strict):
    kind: Literal["call", "capped_call", "capped_straddle", "asym_capped_straddle",
                  "max_with_floor", "resolvent", "custom"] = "max_with_floor"
    parameters: dict[str, float] = Field(default_factory=lambda: {"floor": 1.0})
    # resolvent: running reward pi(x); custom: payoff g(x); both expressions in x
    expression: str | None = None
    kinks: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        need = _PAYOFF_PARAMS[self.kind]
        if set(self.parameters) != need:
            raise ValueError(f"{self.kind} needs parameters {sorted(need)}, got {sorted(self.parameters)}")
        if self.kind in ("resolvent", "custom") and not self.expression:
            raise ValueError(f"{self.kind} payoff needs an expression in x")
        return self


class GridConfig(_Strict):
    lo: float | None = None
    hi: float | None = None
    n: int = Field(50, ge=2)


class SolverConfig(_Strict):
    mode: Literal["one_sided", "two_sided"] = "two_sided"
    lower: float | None = None
    upper: float | None = None
    n_grid: int = Field(400, ge=10)
    xtol: float = Field(1e-14, gt=0)
    beta_nodes: int = Field(200, ge=10)
    beta_depth: float = Field(1e-6, gt=0, lt=1)
    dual_check: bool = True
    table: GridConfig = Field(default_factory=GridConfig)


class SimulationConfig(_Strict):
    scheme: Scheme = Scheme.EXACT_GBM
    dt: float = Field(1e-2, gt=0)
    n_paths: int = Field(100_000, ge=1)
    seed: int = Field(12345, ge=0, lt=2**64)
    antithetic: bool = False
    threads: int = Field(1, ge=1)


class VerifyConfig(_Strict):
    jv_rtol: float = 1e-5
    jv_points: int = Field(50, ge=2)
    mc_points: list[float] | None = None
    mc_power_tol: float = Field(0.05, gt=0)
    n_se: float = 3.0
    law_x: float | None = 2.0
    law_probes: list[tuple[float, float]] = Field(default_factory=lambda: [(1.0, 4.0), (1.5, 3.0)])
    signal_points: int = Field(10, ge=1)
    signal_tol: float = 1e-4
    dual_rtol: float = 1e-6
    inject_z_star: float | None = None
    inject_y_star: float | None = None


class LawsConfig(_Strict):
    # (x, i, m); i may be null for the sup marginal alone
    probes: list[tuple[float, float | None, float]] = Field(
        default_factory=lambda: [(2.0, 1.0, 4.0), (2.0, 1.5, 3.0), (1.0, 0.5, 2.0)])
    empirical: bool = False


class OutputConfig(_Strict):
    format: Literal["csv", "json"] = "csv"
    directory: str = "supstop_out"


class ProblemConfig(_Strict):
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    payoff: PayoffConfig = Field(default_factory=PayoffConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    laws: LawsConfig = Field(default_factory=LawsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


# ---------------------------------------------------------------------------
# reading and writing

def parse_config(text: str, fmt: str = "yaml") -> ProblemConfig:
    """Parse YAML or JSON text into a validated config.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys or invalid values.
    """
    try:
        data = json.loads(text) if fmt == "json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    try:
        return ProblemConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ProblemConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text, "json" if p.suffix.lower() == ".json" else "yaml")


def dump_config(cfg: ProblemConfig, fmt: str = "yaml") -> str:
    data = cfg.model_dump(mode="json")
    if fmt == "json":
        return json.dumps(data, indent=2)
    return yaml.safe_dump(data, sort_keys=False)


# ---------------------------------------------------------------------------
# builders

_X = sympy.Symbol("x", real=True)


def _expr(text: str, what: str) -> sympy.Expr:
    try:
        return sympy.sympify(text, locals={"x": _X})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse {what} expression {text!r}: {exc}") from exc


def _lambdify(expr: sympy.Expr):
    fn = sympy.lambdify(_X, expr, "numpy")
    return lambda t: fn(t) + 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else float(fn(t))


def build_diffusion(cfg: DiffusionConfig) -> tuple[DiffusionSpec, FundamentalPair]:
    p = cfg.parameters
    if cfg.kind == "gbm":
        return gbm_spec(p["mu"], p["sigma"], cfg.r), make_gbm_pair(p["mu"], p["sigma"], cfg.r)
    if cfg.kind == "logistic":
        return (logistic_spec(p["mu"], p["gamma"], p["sigma"], cfg.r),
                make_logistic_pair(p["mu"], p["gamma"], p["sigma"], cfg.r, cfg.reference))
    mu = _lambdify(_expr(cfg.drift, "drift"))
    sig = _lambdify(_expr(cfg.volatility, "volatility"))
    spec = DiffusionSpec(mu, sig, tuple(cfg.interval), cfg.r, cfg.boundary_a, cfg.boundary_b,
                         family="custom", params=dict(p))
    lo, hi = cfg.truncation
    return spec, make_numeric_pair(spec, ODEConfig(lo, hi, cfg.reference))


def build_payoff(cfg: PayoffConfig, spec: DiffusionSpec, pair: FundamentalPair) -> Payoff:
    p = cfg.parameters
    if cfg.kind == "call":
        return call_payoff(p["strike"])
    if cfg.kind == "capped_call":
        return capped_call_payoff(p["strike"], p["cap"])
    if cfg.kind == "capped_straddle":
        return capped_straddle_payoff(p["strike"], p["cap"])
    if cfg.kind == "asym_capped_straddle":
        return asym_capped_straddle_payoff(p["strike"], p["cap_low"], p["cap_high"])
    if cfg.kind == "max_with_floor":
        return max_with_floor_payoff(p["floor"])
    expr = _expr(cfg.expression, cfg.kind)
    if cfg.kind == "resolvent":
        pi = _lambdify(expr)
        return resolvent_payoff(lambda t: pi(float(t)), pair, spec)
    # custom: derivatives are symbolic; one-sided limits at kinks by offset
    g = _lambdify(expr)
    d1 = _lambdify(sympy.diff(expr, _X))
    d2 = _lambdify(sympy.diff(expr, _X, 2))
    kinks = sorted(cfg.kinks)

    def side(sign):
        def fn(t):
            if np.ndim(t):
                return np.array([fn(float(v)) for v in np.ravel(t)]).reshape(np.shape(t))
            if t in kinks:
                return d1(t + sign * 1e-9 * max(1.0, abs(t)))
            return d1(t)
        return fn

    return custom_payoff(g, side(-1.0), side(+1.0), d2, kinks)


def build_sim_config(cfg: SimulationConfig, seed: int | None = None,
                     threads: int | None = None) -> PathSimConfig:
    return PathSimConfig(scheme=cfg.scheme, dt=cfg.dt, n_paths=cfg.n_paths,
                         seed=cfg.seed if seed is None else seed, antithetic=cfg.antithetic,
                         threads=cfg.threads if threads is None else threads)
