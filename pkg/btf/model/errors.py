"""Exceptions raised by the tensor filtering model

Every error derives from BTFError and from the closest builtin so callers may catch either.

Created: 19/10/2026
"""

# imports
import numpy as np


# modules
class BTFError(Exception):
    """Base class of all model errors."""


class DataError(BTFError, ValueError):
    """Observations violate the data contract (duplicates, non-finite values, coverage)."""


class ConfigError(BTFError, ValueError):
    """Run parameters are missing or out of range."""


class InfeasibleStateError(BTFError, ValueError):
    """A state vector or constraint system violates the active linear constraints."""


class CholeskyError(BTFError, np.linalg.LinAlgError):
    """Cholesky factorization of a precision or covariance matrix failed."""


class ConvergenceError(BTFError, RuntimeError):
    """An iterative fit (IRLS, alternating LPs) did not converge."""


class PriorEstimationError(BTFError, ValueError):
    """The empirical Bayes pipetting prior cannot be estimated from the plates given."""
