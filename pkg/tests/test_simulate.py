import math

import numpy as np
import pytest

from supstop import ParamError, PathSimConfig
from supstop.errors import SchemeError
from supstop.simulate import (
    Scheme,
    discretization_trend,
    empirical_law_check,
    one_sided_target,
    simulate_expected_sup,
    simulate_extrema,
    simulate_resolvent,
    two_sided_target,
)

PROBES = [(1.0, 4.0), (1.5, 3.0), (1.8, 2.2), (0.5, 2.5), (1.2, 6.0), (1.9, 2.05)]


@pytest.fixture(scope="module")
def gbm_sample(gbm):
    spec, _ = gbm
    return simulate_extrema(spec, 2.0, PathSimConfig(n_paths=40_000, seed=2024))


def test_seed_reproducibility_and_thread_invariance(gbm):
    spec, _ = gbm
    cfg = PathSimConfig(n_paths=6000, seed=99, block_size=1024)
    a = simulate_extrema(spec, 2.0, cfg)
    b = simulate_extrema(spec, 2.0, cfg)
    c = simulate_extrema(spec, 2.0, PathSimConfig(n_paths=6000, seed=99, block_size=1024, threads=3))
    for s in (b, c):
        assert np.array_equal(a.sup, s.sup) and np.array_equal(a.inf, s.inf)
        assert np.array_equal(a.terminal, s.terminal)
    d = simulate_extrema(spec, 2.0, PathSimConfig(n_paths=6000, seed=100, block_size=1024))
    assert not np.array_equal(a.sup, d.sup)


def test_sample_is_ordered(gbm_sample):
    s = gbm_sample
    assert np.all(s.inf <= s.terminal) and np.all(s.terminal <= s.sup)
    assert np.all(s.inf <= 2.0) and np.all(s.sup >= 2.0)


def test_antithetic_pairs(gbm):
    spec, _ = gbm
    s = simulate_extrema(spec, 2.0, PathSimConfig(n_paths=1001, seed=5, antithetic=True, block_size=512))
    assert s.n % 2 == 0 and s.n >= 1001
    assert len(np.unique(s.pair_index)) == s.n // 2


def test_zero_functional(gbm, gbm_sample):
    spec, pair = gbm
    est = simulate_expected_sup(lambda t: 0.0 * np.asarray(t), lambda t: np.ones_like(np.asarray(t), dtype=bool),
                                spec, pair, 2.0, PathSimConfig(), sample=gbm_sample)
    assert est.estimate == 0.0 and est.std_error == 0.0


def test_capped_call_expected_sup(gbm, capped_rep):
    spec, pair = gbm
    cfg = PathSimConfig(n_paths=40_000, seed=11)
    est = simulate_expected_sup(spec=spec, pair=pair, x=4.0, cfg=cfg, **one_sided_target(capped_rep))
    assert abs(est.estimate - 1.28) <= 3 * est.std_error
    assert abs(est.shortcut - 1.28) <= 3 * est.shortcut_std_error


def test_floor_two_sided_expected_sup(gbm, floor_rep):
    spec, pair = gbm
    cfg = PathSimConfig(n_paths=40_000, seed=12)
    x = 1.0
    est = simulate_expected_sup(spec=spec, pair=pair, x=x, cfg=cfg, **two_sided_target(floor_rep))
    target = floor_rep.value(x)
    # small allowance for the per-step bridge approximation of the joint extremes
    assert abs(est.estimate - target) <= 3 * est.std_error + 2e-3
    assert abs(est.shortcut - target) <= 3 * est.shortcut_std_error + 2e-3


def test_law_check_exact_scheme(gbm, gbm_sample):
    spec, pair = gbm
    rep = empirical_law_check(spec, pair, 2.0, PROBES, PathSimConfig(), sample=gbm_sample)
    assert len([r for r in rep.rows if r.valid]) >= 6
    assert rep.all_ok, [r for r in rep.rows if not r.ok]


def test_invalid_probe_is_marked(gbm, gbm_sample):
    spec, pair = gbm
    rep = empirical_law_check(spec, pair, 2.0, [(2.5, 4.0), (1.0, 4.0)], PathSimConfig(), sample=gbm_sample)
    assert not rep.rows[0].valid and rep.rows[0].reason
    assert rep.rows[1].valid and rep.rows[1].ok
    assert rep.all_ok


def test_euler_discretization_trend(gbm):
    spec, pair = gbm
    cfg = PathSimConfig(scheme=Scheme.EULER_MARUYAMA, dt=0.08, n_paths=20_000, seed=3)
    rep = discretization_trend(spec, pair, 2.0, 3.0, cfg, halvings=2)
    # the discrete maximum misses excursions, so P(M <= m) is overestimated
    assert all(b > 0 for b in rep.bias)
    assert rep.monotone
    assert rep.dts == [0.08, 0.04, 0.02]


def test_resolvent_simulation(gbm):
    spec, _ = gbm
    est, se = simulate_resolvent(lambda t: np.asarray(t), spec, 2.0, PathSimConfig(n_paths=40_000, seed=21))
    # E_x[X_T] = r x / (r - mu) for geometric motion, so the resolvent is x / (r - mu)
    assert abs(est - 2.0 / (spec.r - 0.15)) <= 3 * se


def test_config_validation(logistic):
    with pytest.raises(ParamError):
        PathSimConfig(dt=0.0)
    with pytest.raises(ParamError):
        PathSimConfig(n_paths=0)
    with pytest.raises(ParamError):
        PathSimConfig(block_size=7)
    with pytest.raises(ParamError):
        PathSimConfig(seed=-1)
    with pytest.raises(ValueError):
        PathSimConfig(scheme="milstein")
    spec, _ = logistic
    with pytest.raises(SchemeError):
        simulate_extrema(spec, 1.0, PathSimConfig(n_paths=10))
    assert math.isfinite(PathSimConfig().dt)
