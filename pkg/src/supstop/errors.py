"""Exception hierarchy shared by all solver modules."""


class SupStopError(Exception):
    """Base class for every library error."""


class DomainError(SupStopError, ValueError):
    """An argument lies outside the admissible state interval or ordering."""


class ParamError(SupStopError, ValueError):
    """Invalid model parameters."""


class QuadratureFailure(SupStopError, ArithmeticError):
    """Adaptive integration did not reach the requested tolerance."""


class SeriesDivergence(SupStopError, ArithmeticError):
    """A power series hit its term cap before converging."""


class ODEFailure(SupStopError, ArithmeticError):
    """The ODE integrator collapsed its step size."""


class MonotonicityFailure(SupStopError, ArithmeticError):
    """A function expected to be monotone is not."""


class NotSupported(SupStopError, NotImplementedError):
    """The requested configuration is outside the implemented scope."""


class GridTooCoarse(SupStopError, ArithmeticError):
    """A scan grid cannot resolve the sign structure it is probing."""


class DegenerateDenominator(SupStopError, ArithmeticError):
    """A ratio has a vanishing denominator."""


class NoPositiveSet(SupStopError, ArithmeticError):
    """The payoff is nowhere positive."""


class NoRoot(SupStopError, ArithmeticError):
    """No sign change was found on the searched domain."""


class LimitViolation(SupStopError, ArithmeticError):
    """g/psi does not vanish toward the upper boundary."""


class BoundaryTermUnknown(SupStopError, ArithmeticError):
    """A boundary limit is needed but cannot be inferred."""


class NoInteriorRoot(SupStopError, ArithmeticError):
    """Neither the smooth nor the corner branch of the two-point system closes."""


class ShapeViolation(SupStopError, ArithmeticError):
    """The generator sign structure is not the two-sign-change shape."""


class RootLost(SupStopError, ArithmeticError):
    """Curve continuation lost its bracket."""

    def __init__(self, message: str, last_node: float | None = None):
        super().__init__(message)
        self.last_node = last_node


class NonMonotoneCurve(SupStopError, ArithmeticError):
    """A traced curve violates its monotonicity."""


class MismatchError(SupStopError, ArithmeticError):
    """Two independent formulas for the same quantity disagree."""


class SchemeError(SupStopError, ArithmeticError):
    """Path simulation left the state interval too often."""


class ConfigError(SupStopError, ValueError):
    """A configuration file failed to parse or validate."""


class OptimizationWarning(UserWarning):
    """Multistart minimization found inconsistent local minima."""


class ExtrapolationWarning(UserWarning):
    """Two estimates of a limiting quantity disagree beyond tolerance."""
