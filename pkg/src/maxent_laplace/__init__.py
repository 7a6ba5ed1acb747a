"""Maximum entropy reconstruction of densities on [0, inf) from Laplace transform values."""

__version__ = "0.1.0"

from .errors import (DomainError, Infeasible, MaxEntError, MaxIterations, NegativeSample,
                     NoConvergence, NonFinite, NotNested, Overflow, QuadratureError,
                     SolverError, TooFewSamples, ValidationError)
from .problem import (MaxEntDensity, MomentProblem, QuadratureSpec, ValidationReport,
                      Violation, validate_columns, validate_problem)
from .quadrature import Integrand, hessian, integrate, partition_function
from .sources import (AlphaScheme, Exponential, Gamma, LogNormal, Mixture, SourceLaw,
                      empirical_moments, empirical_problem, laplace_at, make_problem)
from .solver import SolverConfig, SolveTrace, dual_gradient, dual_hessian, dual_value, solve
from .diagnostics import (DensityTable, SweepReport, density_s, density_table, density_y,
                          entropy, kullback, l1_distance, l1_distance_s, sweep)

__all__ = [name for name in dir() if not name.startswith("_")]
