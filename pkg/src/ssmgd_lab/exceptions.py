"""Exception hierarchy shared by every module of the package."""


class SSMGDError(Exception):
    """Base class for all errors raised by ssmgd_lab."""


class DomainError(SSMGDError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NonStochastic(DomainError):
    """A matrix is not row-stochastic (negative entry or row sum off 1)."""


class NoUniqueStationary(SSMGDError, ArithmeticError):
    """The chain does not have a unique stationary distribution."""


class FitError(SSMGDError, ValueError):
    """An envelope or rate fit cannot be produced from the given data."""


class DimensionMismatch(SSMGDError, ValueError):
    """Array shapes do not agree with the family or chain they are used with."""


class SingularSystem(SSMGDError, ArithmeticError):
    """The averaged linear system defining the minimizer is (numerically) singular."""


class NegativeQuadraticForm(SSMGDError, ArithmeticError):
    """A Gram quadratic form came out negative beyond rounding tolerance."""


class NonFinite(SSMGDError, FloatingPointError):
    """An iterate overflowed or became NaN.

    Attributes
    ----------
    t : int
        Time index of the periodic check that caught it.
    trial : int or None
        Trial index, when raised from a Monte Carlo batch.
    """

    def __init__(self, message, t=None, trial=None):
        super().__init__(message)
        self.t = t
        self.trial = trial


class ConfigError(SSMGDError, ValueError):
    """An experiment configuration is malformed."""
