import numpy as np
import pytest

from supstop import (
    ParamError,
    Side,
    asym_capped_straddle_payoff,
    call_payoff,
    capped_call_payoff,
    capped_straddle_payoff,
    max_with_floor_payoff,
)
from supstop.payoffs import check_continuity, constant_payoff

ALL = [
    call_payoff(3.0),
    capped_call_payoff(3.0, 2.0),
    capped_straddle_payoff(5.0, 2.0),
    asym_capped_straddle_payoff(5.0, 1.0, 3.0),
    max_with_floor_payoff(1.0),
]


@pytest.mark.parametrize("payoff", ALL, ids=lambda p: p.kind.value)
def test_continuity_and_finite_derivatives(payoff):
    assert check_continuity(payoff) == []


def test_capped_call_values_and_kinks():
    p = capped_call_payoff(3.0, 2.0)
    assert p.kinks == (3.0, 5.0)
    assert [p.g(x) for x in (1.0, 4.0, 5.0, 9.0)] == [0.0, 1.0, 2.0, 2.0]
    assert p.g_prime(5.0, Side.LEFT) == 1.0 and p.g_prime(5.0, Side.RIGHT) == 0.0
    assert p.derivative_jump(5.0) == -1.0 and p.derivative_jump(3.0) == 1.0


def test_asymmetric_straddle_shape():
    p = asym_capped_straddle_payoff(5.0, 1.0, 3.0)
    assert p.kinks == (4.0, 5.0, 8.0)
    xs = np.array([2.0, 4.0, 4.5, 5.0, 7.0, 8.0, 12.0])
    assert np.allclose(p.g(xs), np.minimum(np.maximum(5 - xs, 0), 1) + np.minimum(np.maximum(xs - 5, 0), 3))


def test_symmetric_straddle_and_floor():
    p = capped_straddle_payoff(5.0, 2.0)
    xs = np.linspace(0.5, 10.0, 20)
    assert np.allclose(p.g(xs), np.minimum(np.abs(xs - 5.0), 2.0))
    f = max_with_floor_payoff(1.0)
    assert np.allclose(f.g(xs), np.maximum(xs, 1.0))


def test_vector_and_scalar_agree():
    p = capped_straddle_payoff(5.0, 2.0)
    xs = np.array([1.0, 3.0, 4.0, 5.0, 6.5, 7.0, 9.0])
    assert np.array_equal(p.g(xs), [p.g(float(x)) for x in xs])
    assert np.array_equal(p.g_prime_right(xs), [p.g_prime_right(float(x)) for x in xs])


def test_scaled_payoff():
    p = capped_call_payoff(3.0, 2.0).scaled(2.5)
    assert p.g(4.0) == 2.5 and p.g_prime(4.0) == 2.5 and p.kinks == (3.0, 5.0)


def test_constant_payoff():
    c = constant_payoff(3.0)
    assert c.g(7.0) == 3.0 and c.g_prime(7.0) == 0.0


def test_invalid_caps():
    with pytest.raises(ParamError):
        capped_call_payoff(3.0, 0.0)
    with pytest.raises(ParamError):
        asym_capped_straddle_payoff(5.0, -1.0, 3.0)
