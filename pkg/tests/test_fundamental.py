import math

import mpmath
import numpy as np
import pytest

from supstop import (
    Boundary,
    DiffusionSpec,
    KilledSolutions,
    NotSupported,
    ODEConfig,
    ParamError,
    drifted_bm_spec,
    gbm_spec,
    make_gbm_pair,
    make_logistic_pair,
    make_numeric_pair,
)
from supstop.fundamental import gbm_exponents, second_derivative

from conftest import GBM, LOGISTIC


def wronskian(pair, xs):
    return (pair.psi_prime(xs) * pair.phi(xs) - pair.phi_prime(xs) * pair.psi(xs)) / pair.s_prime(xs)


def test_gbm_testbed_exponents(gbm):
    _, pair = gbm
    kp, km = gbm_exponents(**GBM)
    assert kp == pytest.approx(2.0, abs=1e-14) and km == pytest.approx(-4.0, abs=1e-14)
    assert pair.wronskian_B == pytest.approx(6.0, abs=1e-13)
    xs = np.array([0.5, 1.0, 3.0])
    assert np.allclose(wronskian(pair, xs), 6.0, rtol=1e-12)


def test_second_gbm_exponents():
    kp, km = gbm_exponents(0.05, 0.2, 0.1)
    assert kp == pytest.approx((-0.03 + math.sqrt(0.0089)) / 0.04, rel=1e-14)
    assert kp == pytest.approx(1.6085, abs=1e-4) and km == pytest.approx(-3.1085, abs=1e-4)


def test_gbm_pair_rejects_mu_at_least_r():
    with pytest.raises(ParamError):
        make_gbm_pair(0.4, 0.3, 0.4)


def test_logistic_degenerates_to_gbm():
    lp = make_logistic_pair(0.15, 0.0, math.sqrt(0.1), 0.4)
    xs = np.array([0.4, 1.0, 2.5])
    assert np.allclose(lp.psi(xs), xs**2, rtol=1e-12)
    assert np.allclose(lp.phi(xs), xs**-4.0, rtol=1e-12)


def test_logistic_pair_against_mpmath(logistic):
    spec, pair = logistic
    kp, km = gbm_exponents(LOGISTIC["mu"], LOGISTIC["sigma"], LOGISTIC["r"])
    q = 2 * LOGISTIC["mu"] * LOGISTIC["gamma"] / LOGISTIC["sigma"] ** 2
    mp_psi = lambda t: t**kp * mpmath.hyp1f1(kp, 1 + kp - km, q * t)
    # decreasing solution: Tricomi U, normalised to 1 at x = 1
    mp_phi = lambda t: t**km * mpmath.hyperu(km, 1 - kp + km, q * t) / mpmath.hyperu(km, 1 - kp + km, q)
    with mpmath.workdps(30):
        for x in (0.2, 0.7, 1.5, 3.0):
            for fn, d, mp_fn in ((pair.psi, pair.psi_prime, mp_psi), (pair.phi, pair.phi_prime, mp_phi)):
                assert fn(x) == pytest.approx(float(mp_fn(mpmath.mpf(x))), rel=1e-12)
                assert d(x) == pytest.approx(float(mpmath.diff(mp_fn, mpmath.mpf(x))), rel=1e-10)
                # the oracle itself solves the ODE
                u, u1, u2 = (mpmath.diff(mp_fn, mpmath.mpf(x), n) for n in (0, 1, 2))
                res = 0.5 * spec.sigma(x) ** 2 * u2 + spec.mu(x) * u1 - spec.r * u
                assert abs(float(res / (spec.r * u))) < 1e-6


def test_logistic_wronskian_and_monotonicity(logistic):
    _, pair = logistic
    xs = np.geomspace(0.01, 100.0, 60)
    w = wronskian(pair, np.array([0.5, 1.0, 2.0]))
    assert np.ptp(w) < 1e-8 * w[0]
    assert np.all(np.diff(pair.psi(xs)) > 0) and np.all(np.diff(pair.phi(xs)) < 0)


def test_numeric_pair_matches_gbm():
    spec = gbm_spec(**GBM)
    num = make_numeric_pair(spec, ODEConfig(1e-3, 200.0, 1.0))
    xs = np.linspace(0.5, 5.0, 25)
    assert np.allclose(num.psi(xs), xs**2, rtol=1e-6)
    assert np.allclose(num.phi(xs), xs**-4.0, rtol=1e-6)
    w = wronskian(num, xs)
    assert np.ptp(w) < 1e-5 * abs(w[0])


def test_numeric_pair_matches_drifted_bm():
    mu0, s0, r = 0.1, 0.5, 0.2
    spec = drifted_bm_spec(mu0, s0, r)
    num = make_numeric_pair(spec, ODEConfig(-40.0, 40.0, 0.0))
    lp = (-mu0 + math.sqrt(mu0**2 + 2 * s0**2 * r)) / s0**2
    lm = (-mu0 - math.sqrt(mu0**2 + 2 * s0**2 * r)) / s0**2
    xs = np.linspace(-3.0, 3.0, 13)
    assert np.allclose(num.psi(xs), np.exp(lp * xs), rtol=1e-6)
    assert np.allclose(num.phi(xs), np.exp(lm * xs), rtol=1e-6)


def test_numeric_truncation_self_consistency():
    spec = gbm_spec(**GBM)
    wide = make_numeric_pair(spec, ODEConfig(1e-4, 400.0, 1.0))
    tight = make_numeric_pair(spec, ODEConfig(1e-3, 100.0, 1.0))
    xs = np.linspace(0.5, 5.0, 10)
    assert np.allclose(wide.psi(xs), tight.psi(xs), rtol=1e-6)
    assert np.allclose(wide.phi(xs), tight.phi(xs), rtol=1e-6)


def test_numeric_pair_ode_residual():
    spec = gbm_spec(**GBM)
    num = make_numeric_pair(spec, ODEConfig(1e-3, 200.0, 1.0))
    xs = np.linspace(0.5, 5.0, 10)
    h = 1e-4 * xs
    u2 = (num.psi_prime(xs + h) - num.psi_prime(xs - h)) / (2 * h)
    assert np.allclose(u2, second_derivative(num.psi, num.psi_prime, spec, xs), rtol=1e-4)


def test_reflecting_boundary_rejected():
    spec = DiffusionSpec(lambda x: 0.0, lambda x: 1.0, (0.0, 1.0), 0.1,
                         Boundary.REGULAR_REFLECTED, Boundary.EXIT)
    with pytest.raises(NotSupported):
        make_numeric_pair(spec, ODEConfig(0.0, 1.0, 0.5))


def test_killed_solutions(gbm):
    _, pair = gbm
    k = KilledSolutions(pair)
    xs = np.array([1.0, 2.0, 5.0])
    assert np.allclose(k.phi_hat(8.0, xs), 64 * xs**-4.0 - xs**2 / 4096, rtol=1e-14)
    assert k.psi_hat(1.0, 2.0) == pytest.approx(3.9375, rel=1e-15)
    for z in (0.3, 1.0, 4.0):
        assert k.psi_hat(z, z) == 0.0 and k.phi_hat(z, z) == 0.0
    grid = np.linspace(1.0, 3.0, 50)
    assert np.all(np.diff(k.psi_hat(1.0, grid)) > 0)
    assert np.all(np.diff(k.phi_hat(3.0, grid)) < 0)


@pytest.mark.parametrize("z,x,y", [(0.5, 0.9, 1.6), (1.0, 2.0, 4.0), (2.0, 2.1, 9.0)])
def test_hitting_ratios(gbm, z, x, y):
    _, pair = gbm
    k = KilledSolutions(pair)
    up = k.psi_hat(z, x) / k.psi_hat(z, y)
    down = k.phi_hat(y, x) / k.phi_hat(y, z)
    assert 0 < up < 1 and 0 < down < 1 and up + down < 1
