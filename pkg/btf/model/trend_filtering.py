"""Composite trend filtering prior
A module that builds the stacked difference operator over a column's dose curve (an anchor row followed by all
difference orders up to k+1) and the proper prior precision it induces.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass
import numpy as np
import numpy.typing as npt
from scipy import sparse
from btf.model.errors import ConfigError


# modules
@dataclass(frozen=True)
class CompositeDiffMatrix:
    """
    L x T stacked difference operator

    Attributes
    ----------
    entries: sparse.csr_matrix
        anchor row e_1, then first differences, ..., then (k+1)-th differences
    k: int
        trend filtering order
    T: int
        number of grid points
    """

    entries: sparse.csr_matrix
    k: int
    T: int

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    def apply(self, curve: npt.NDArray) -> npt.NDArray:
        """Differences of a (T,) or (T, D) curve"""
        return self.entries @ curve


def composite_row_count(T: int, k: int) -> int:
    return 1 + sum(T - q for q in range(1, k + 2))


def build_composite_tf_matrix(T: int, k: int) -> CompositeDiffMatrix:
    """
    Stack the anchor row and all difference blocks of order 1..k+1

    Parameters
    ----------
    T: int
        grid size, at least k+2
    k: int
        trend filtering order, k=0 gives piecewise constant and k=1 piecewise linear shrinkage

    Returns
    -------
    CompositeDiffMatrix
        block q carries the alternating binomial coefficients of order q
    """
    if k < 0:
        raise ConfigError("k must be at least 0, got %d" % k)
    if T < k + 2:
        raise ConfigError("T=%d is too short for order k=%d (need T >= k+2)" % (T, k))

    eye = np.eye(T)
    blocks = [eye[:1]]
    for q in range(1, k + 2):
        # np.diff gives x_{t+1} - x_t; flip sign so every block starts with +1
        blocks.append((-1) ** q * np.diff(eye, n=q, axis=0))
    entries = sparse.csr_matrix(np.vstack(blocks))
    return CompositeDiffMatrix(entries=entries, k=k, T=T)


def build_prior_precision(
    delta: CompositeDiffMatrix, rho2: float, tau2_j: npt.NDArray
) -> sparse.csr_matrix:
    """
    Prior precision Delta^T diag(1/(rho2 tau2_j)) Delta of one column curve

    Parameters
    ----------
    delta: CompositeDiffMatrix
        difference operator
    rho2: float
        global shrinkage
    tau2_j: npt.NDArray
        local variances for the L difference rows of column j

    Returns
    -------
    sparse.csr_matrix
        T x T symmetric positive definite band matrix
    """
    tau2_j = np.asarray(tau2_j, dtype=float)
    if rho2 <= 0 or np.any(tau2_j <= 0):
        raise ConfigError("prior variances must be strictly positive")
    if tau2_j.shape != (delta.L,):
        raise ConfigError("expected %d local variances, got %s" % (delta.L, tau2_j.shape))
    scale = sparse.diags(1.0 / (rho2 * tau2_j))
    precision = delta.entries.T @ scale @ delta.entries
    return sparse.csr_matrix(precision)
