import math

import pytest

from supstop import (
    asym_capped_straddle_payoff,
    capped_call_payoff,
    capped_straddle_payoff,
    gbm_spec,
    logistic_spec,
    make_gbm_pair,
    make_logistic_pair,
    max_with_floor_payoff,
    solve_one_sided,
    solve_two_sided,
)
from supstop.payoffs import linear_payoff

# GBM testbed: psi = x^2, phi = x^-4, S' = x^-3, m' = 20 x, B = 6
GBM = dict(mu=0.15, sigma=math.sqrt(0.1), r=0.4)
LOGISTIC = dict(mu=0.07, gamma=0.5, sigma=0.1, r=0.035)


@pytest.fixture(scope="session")
def gbm():
    return gbm_spec(**GBM), make_gbm_pair(**GBM)


@pytest.fixture(scope="session")
def logistic():
    return logistic_spec(**LOGISTIC), make_logistic_pair(**LOGISTIC)


@pytest.fixture(scope="session")
def floor_rep(gbm):
    spec, pair = gbm
    return solve_two_sided(max_with_floor_payoff(1.0), pair, spec)


@pytest.fixture(scope="session")
def logistic_rep(logistic):
    spec, pair = logistic
    return solve_two_sided(max_with_floor_payoff(1.0), pair, spec)


@pytest.fixture(scope="session")
def asym_rep(gbm):
    spec, pair = gbm
    return solve_two_sided(asym_capped_straddle_payoff(5.0, 1.0, 3.0), pair, spec)


@pytest.fixture(scope="session")
def sym_rep(gbm):
    spec, pair = gbm
    return solve_two_sided(capped_straddle_payoff(5.0, 2.0), pair, spec)


@pytest.fixture(scope="session")
def capped_rep(gbm):
    spec, pair = gbm
    return solve_one_sided(capped_call_payoff(3.0, 2.0), pair, spec)


@pytest.fixture(scope="session")
def linear_rep(gbm):
    spec, pair = gbm
    return solve_one_sided(linear_payoff(3.0), pair, spec)
