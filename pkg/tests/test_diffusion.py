import math

import numpy as np
import pytest

from supstop import DiffusionSpec, DomainError, ParamError, gbm_spec, scale_density
from supstop.diffusion import validate_spec

from conftest import GBM


def test_driftless_scale_is_flat():
    spec = DiffusionSpec(lambda x: 0.0, lambda x: 1.0, (-math.inf, math.inf), 0.5)
    ss = scale_density(spec, 0.0)
    for x in (-3.0, 0.0, 2.5):
        assert ss.scale_density(x) == pytest.approx(1.0, abs=1e-14)


def test_gbm_scale_by_quadrature_matches_closed_form():
    ss = scale_density(gbm_spec(**GBM), 1.0)
    xs = np.array([0.3, 1.0, 2.0, 7.5])
    assert np.allclose(ss.scale_density(xs), xs**-3.0, rtol=1e-10)
    assert np.allclose(ss.speed_density(xs), 20.0 * xs, rtol=1e-10)
    assert ss.scale_density(1.0) == 1.0


def test_speed_identity_on_grid(gbm):
    spec, pair = gbm
    xs = np.geomspace(0.05, 50.0, 40)
    prod = pair.m_prime(xs) * spec.sigma(xs) ** 2 * pair.s_prime(xs) / 2.0
    assert np.max(np.abs(prod - 1.0)) < 1e-12
    ss = scale_density(spec, 2.0)
    prod = np.array([ss.speed_density(x) * spec.sigma(x) ** 2 * ss.scale_density(x) / 2 for x in xs])
    assert np.max(np.abs(prod - 1.0)) < 1e-8


def test_anchor_rescaling_is_constant_factor():
    spec = gbm_spec(**GBM)
    s1, s2 = scale_density(spec, 1.0), scale_density(spec, 2.0)
    ratios = [s1.scale_density(x) / s2.scale_density(x) for x in (0.5, 1.0, 3.0, 9.0)]
    assert np.ptp(ratios) < 1e-9 * ratios[0]
    assert ratios[0] == pytest.approx(0.125, rel=1e-10)


def test_anchor_outside_interval():
    with pytest.raises(DomainError):
        scale_density(gbm_spec(**GBM), -1.0)


def test_spec_invariants():
    with pytest.raises(ParamError):
        DiffusionSpec(lambda x: 0.0, lambda x: 1.0, (1.0, 0.0), 0.1)
    with pytest.raises(ParamError):
        DiffusionSpec(lambda x: 0.0, lambda x: 1.0, (0.0, 1.0), 0.0)


def test_validate_spec_reports():
    assert validate_spec(gbm_spec(**GBM), [0.5, 1.0, 2.0]).ok
    bad_sigma = DiffusionSpec(lambda x: 0.0, lambda x: x - 1.0, (0.0, 2.0), 0.1)
    rep = validate_spec(bad_sigma, [0.5, 1.0, 1.5])
    assert 1.0 in rep.sigma_violations and 0.5 in rep.sigma_violations
    singular = DiffusionSpec(lambda x: 1.0 / x, lambda x: 1.0, (-1.0, 1.0), 0.1)
    assert validate_spec(singular, [0.0]).nonfinite_mu == [0.0]
