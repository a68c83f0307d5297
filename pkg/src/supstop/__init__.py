"""Optimal stopping of linear diffusions and expected-supremum representations."""

from .diffusion import Boundary, DiffusionSpec, gbm_spec, logistic_spec, drifted_bm_spec, scale_density
from .errors import *  # noqa: F401,F403
from .fundamental import (
    FundamentalPair,
    KilledSolutions,
    ODEConfig,
    make_gbm_pair,
    make_logistic_pair,
    make_numeric_pair,
    make_user_pair,
)
from .functionals import generator, l_functional, l_increment, ratio_r, resolvent
from .laws import (
    ExtremalLaw,
    conditional_density_given_inf,
    conditional_density_given_sup,
    conditional_expectation,
    inf_cdf,
    joint_cdf,
    sup_cdf,
)
from .one_sided import OneSidedSearch, RepresentationOneSided, diagnose_monotonicity, j_value, solve_one_sided
from .payoffs import (
    Payoff,
    Side,
    asym_capped_straddle_payoff,
    call_payoff,
    capped_call_payoff,
    capped_straddle_payoff,
    custom_payoff,
    max_with_floor_payoff,
    resolvent_payoff,
)
from .simulate import PathSimConfig, Scheme, empirical_law_check, simulate_expected_sup, simulate_extrema
from .special import KummerParams, kummer_m, kummer_m_derivative
from .two_sided import (
    BetaGridConfig,
    RepresentationTwoSided,
    TwoSidedSearch,
    j_value_two_sided,
    represent_two_sided,
    solve_optimal_pair,
    solve_two_sided,
    stopping_signal,
    value_two_sided,
)

__version__ = "0.1.0"
