"""Exception hierarchy shared by all modules."""


class MaxEntError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MaxEntError, ValueError):
    """Input data violates a structural or feasibility requirement."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class QuadratureError(MaxEntError):
    pass


class NoConvergence(QuadratureError):
    """Panel budget exhausted before the requested tolerance was met."""


class NonFinite(QuadratureError):
    """Integrand produced NaN or infinity at an evaluation node."""


class Overflow(QuadratureError):
    """Exponent left the representable range even after max-factoring."""


class SolverError(MaxEntError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class Infeasible(SolverError):
    """Moment vector lies outside, or numerically on, the boundary of the moment set."""


class MaxIterations(SolverError):
    """Newton iteration did not reach the residual tolerance."""


class DomainError(MaxEntError, ValueError):
    pass


class NotNested(MaxEntError, ValueError):
    """Exponent sets of a sweep are not prefixes of one another."""


class TooFewSamples(MaxEntError, ValueError):
    pass


class NegativeSample(MaxEntError, ValueError):
    pass
