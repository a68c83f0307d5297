import math

import numpy as np
import pytest

from supstop import (
    QuadratureFailure,
    Side,
    capped_call_payoff,
    capped_straddle_payoff,
    generator,
    l_functional,
    l_increment,
    max_with_floor_payoff,
    ratio_r,
    resolvent,
    resolvent_payoff,
)
from supstop.functionals import PHI, PSI, generator_value, l_difference
from supstop.quadrature import integrate
from supstop.payoffs import constant_payoff, custom_payoff, linear_payoff


def pi_example(x):
    return (x**5 - 2.0) * math.exp(-x) + 1.0


def test_generator_linear_payoff(gbm):
    spec, _ = gbm
    prof = generator(linear_payoff(3.0), spec, np.linspace(0.5, 10.0, 40))
    assert np.allclose(prof.values, 1.2 - 0.25 * prof.grid, atol=1e-14)
    assert prof.sign_changes == [pytest.approx(4.8, abs=1e-12)]


def test_generator_constant_payoff(gbm):
    spec, _ = gbm
    prof = generator(constant_payoff(2.0), spec, np.linspace(0.5, 5.0, 10))
    assert np.allclose(prof.values, -0.8)


def test_generator_of_resolvent_is_minus_pi(gbm):
    spec, pair = gbm
    g = resolvent_payoff(pi_example, pair, spec)
    for x in (0.5, 1.0, 2.0, 4.0, 7.0):
        assert generator_value(g, spec, x) == pytest.approx(-pi_example(x), rel=1e-6)


def test_generator_kink_atoms_counted_as_sign_changes(gbm):
    spec, _ = gbm
    prof = generator(max_with_floor_payoff(1.0), spec, np.geomspace(0.05, 20.0, 200))
    # negative below 1, positive atom at the floor, then 0.15x - 0.4x < 0
    assert prof.sign_changes == [1.0, 1.0]
    assert prof.atoms == {1.0: 1.0}


def test_l_functional_examples(gbm):
    _, pair = gbm
    g = linear_payoff(3.0)
    for x in (1.0, 2.0, 6.0, 9.0):
        assert l_functional(PSI, g, pair, x) == pytest.approx(x**4 * (x - 6.0), rel=1e-13, abs=1e-12)
    psi_payoff = custom_payoff(pair.psi, pair.psi_prime, pair.psi_prime, lambda t: 2.0)
    assert l_functional(PSI, psi_payoff, pair, 2.3) == pytest.approx(0.0, abs=1e-12)
    cap = capped_call_payoff(3.0, 2.0)
    jump = l_functional(PSI, cap, pair, 5.0, Side.RIGHT) - l_functional(PSI, cap, pair, 5.0, Side.LEFT)
    assert jump == pytest.approx(25.0 * 125.0, rel=1e-14)


def test_l_functional_linear_in_u(gbm):
    _, pair = gbm
    g = capped_straddle_payoff(5.0, 2.0)
    x, c1, c2 = 3.7, 0.3, -2.0
    combo = l_functional((c1, c2), g, pair, x)
    assert combo == pytest.approx(c1 * l_functional(PSI, g, pair, x) + c2 * l_functional(PHI, g, pair, x))


def test_l_increment_examples(gbm):
    spec, pair = gbm
    g = linear_payoff(3.0)
    assert l_increment(PSI, g, pair, 2.0, 2.0, spec) == 0.0
    assert l_increment(PSI, g, pair, 2.0, 6.0, spec) == pytest.approx(-64.0, rel=1e-8)
    psi_payoff = custom_payoff(pair.psi, pair.psi_prime, pair.psi_prime, lambda t: 2.0)
    assert l_increment(PSI, psi_payoff, pair, 0.5, 3.0, spec) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("payoff", [linear_payoff(3.0), capped_call_payoff(3.0, 2.0),
                                    capped_straddle_payoff(5.0, 2.0), max_with_floor_payoff(1.0)],
                         ids=["linear", "capped_call", "straddle", "floor"])
@pytest.mark.parametrize("u", [PSI, PHI, (0.7, 1.3)])
def test_l_increment_equals_endpoint_difference(gbm, payoff, u):
    spec, pair = gbm
    for z, y in ((0.6, 2.5), (2.0, 6.0), (3.0, 8.0), (4.5, 9.5), (1.0, 5.0)):
        inc = l_increment(u, payoff, pair, z, y, spec)
        diff = l_difference(u, payoff, pair, z, y)
        scale = max(abs(l_functional(u, payoff, pair, t, s)) for t in (z, y) for s in Side)
        assert abs(inc - diff) <= 1e-8 * max(scale, 1.0)


def test_l_derivative_is_generator_density(gbm):
    spec, pair = gbm
    g = resolvent_payoff(pi_example, pair, spec)
    for x in (0.7, 1.5, 3.0, 6.0):
        h = 1e-4 * x
        d = (l_functional(PSI, g, pair, x + h) - l_functional(PSI, g, pair, x - h)) / (2 * h)
        target = -generator_value(g, spec, x) * pair.psi(x) * pair.m_prime(x)
        assert d == pytest.approx(target, rel=1e-5)


def test_ratio_properties(gbm):
    spec, pair = gbm
    g = linear_payoff(3.0)
    for z, y in ((0.5, 1.5), (2.0, 7.0), (3.3, 3.9)):
        a = ratio_r(g, pair, z, y)
        assert ratio_r(g, pair, y, z) == a
        # each u gives the u m'-weighted mean of -G_r g / r over (z, y)
        for u in (PSI, PHI):
            w = lambda t: u[0] * pair.psi(t) + u[1] * pair.phi(t)
            num = integrate(lambda t: -generator_value(g, spec, t) / spec.r * w(t) * pair.m_prime(t), z, y)
            den = integrate(lambda t: w(t) * pair.m_prime(t), z, y)
            assert ratio_r(g, pair, z, y, u) == pytest.approx(num / den, rel=1e-10)
    assert ratio_r(constant_payoff(2.5), pair, 1.0, 4.0) == pytest.approx(2.5, rel=1e-12)
    assert ratio_r(constant_payoff(2.5), pair, 1.0, 4.0, PHI) == pytest.approx(2.5, rel=1e-12)


def test_ratio_u_independent_when_generator_constant(gbm):
    # g = 2 + psi - 3 phi has G_r g = -2r, so every weighting gives 2
    spec, pair = gbm
    g = custom_payoff(lambda t: 2.0 + pair.psi(t) - 3.0 * pair.phi(t),
                      lambda t: pair.psi_prime(t) - 3.0 * pair.phi_prime(t),
                      lambda t: pair.psi_prime(t) - 3.0 * pair.phi_prime(t),
                      lambda t: 2.0 - 60.0 * t**-6.0)
    for z, y in ((0.5, 1.5), (2.0, 7.0)):
        assert ratio_r(g, pair, z, y) == pytest.approx(2.0, rel=1e-9)
        assert ratio_r(g, pair, z, y, PHI) == pytest.approx(2.0, rel=1e-9)


def test_ratio_u_independent_in_the_limit(gbm):
    spec, pair = gbm
    g = linear_payoff(3.0)
    for z in (0.8, 2.0, 5.0):
        y = z * (1 + 1e-6)
        assert ratio_r(g, pair, z, y, PHI) == pytest.approx(ratio_r(g, pair, z, y), rel=1e-5)


def test_ratio_limit_is_generator_over_r(gbm):
    spec, pair = gbm
    g = resolvent_payoff(pi_example, pair, spec)
    for z in (0.8, 2.0, 5.0):
        y = z * (1 + 1e-6)
        assert ratio_r(g, pair, z, y) == pytest.approx(-generator_value(g, spec, z) / spec.r, rel=1e-4)
        # near-coincident points resolve to the limit
        assert ratio_r(g, pair, z, z * (1 + 1e-10), spec=spec) == pytest.approx(pi_example(z) / spec.r, rel=1e-6)


def test_resolvent_of_constant(gbm):
    spec, pair = gbm
    for x in (1.0, 2.0, 5.0):
        assert resolvent(lambda t: 1.0, pair, spec, x) == pytest.approx(1.0 / spec.r, rel=1e-9)


def test_resolvent_divergence_detected(gbm):
    spec, pair = gbm
    with pytest.raises(QuadratureFailure):
        resolvent(lambda t: spec.r * pair.psi(t), pair, spec, 1.0)


def test_resolvent_solves_poisson_equation(gbm):
    spec, pair = gbm
    for x in (1.0, 2.5, 5.0):
        h = 1e-3 * x
        v = [resolvent(pi_example, pair, spec, t) for t in (x - h, x, x + h)]
        d1 = (v[2] - v[0]) / (2 * h)
        d2 = (v[2] - 2 * v[1] + v[0]) / h**2
        gen = 0.5 * spec.sigma(x) ** 2 * d2 + spec.mu(x) * d1 - spec.r * v[1]
        assert gen == pytest.approx(-pi_example(x), rel=1e-4)
