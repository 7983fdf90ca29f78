"""Pseudo-EP conditioning
A module that fits a constrained matrix factorization once, by alternating linear programs over rows and columns,
and turns it into an inflated-variance Gaussian surrogate of the likelihood. The black-box sampler folds the
surrogate into its Gaussian prior to widen the GASS ellipses and subtracts its log-density from the true
log-likelihood so the target is unchanged.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass, field
import logging
from typing import Optional
import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.optimize import linprog
from btf.model.constraints import ConstraintKind, ConstraintSet, build_constraints
from btf.model.errors import ConvergenceError, DataError, InfeasibleStateError
from btf.model.samplers import pav_monotone_projection
from btf.model.tensor import FactorState, ObservationTensor

logger = logging.getLogger(__name__)

PSEUDO_VAR_FLOOR = 1e-4


# modules
@dataclass
class PseudoEpApprox:
    """
    Gaussian pseudo-observations of every inner product

    Attributes
    ----------
    pseudo_obs: npt.NDArray
        N x M x T point estimates of <w_i, v_jt> from the constrained fit
    pseudo_var: npt.NDArray
        N x M x T inflated variances, strictly positive
    inflation: float
        multiplier applied to the mean squared residuals
    enabled: bool
        a disabled approximation contributes nothing to the prior or the likelihood correction
    als_state: FactorState, optional
        factors of the constrained fit
    iterations: int
        number of row/column alternations run
    """

    pseudo_obs: npt.NDArray
    pseudo_var: npt.NDArray
    inflation: float = 2.0
    enabled: bool = True
    als_state: Optional[FactorState] = None
    iterations: int = 0
    objective_trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.pseudo_obs.shape != self.pseudo_var.shape:
            raise DataError("pseudo_obs and pseudo_var must have equal shapes")
        if not np.all(self.pseudo_var > 0):
            raise DataError("pseudo_var must be strictly positive")

    @classmethod
    def disabled(cls, shape: tuple[int, int, int]) -> "PseudoEpApprox":
        return cls(np.zeros(shape), np.ones(shape), inflation=0.0, enabled=False)

    def weights(self, observed: npt.NDArray) -> tuple[npt.NDArray, npt.NDArray]:
        """
        Precision and information of the pseudo data, on observed cells only

        Returns
        -------
        tuple[npt.NDArray, npt.NDArray]
            1/pseudo_var and pseudo_obs/pseudo_var, zero where unobserved or when disabled
        """
        if not self.enabled:
            zeros = np.zeros(self.pseudo_obs.shape)
            return zeros, zeros.copy()
        precision = np.where(observed, 1.0 / self.pseudo_var, 0.0)
        return precision, precision * self.pseudo_obs

    def log_density(self, theta: npt.NDArray, cells: tuple) -> npt.NDArray:
        """Gaussian log-density of the pseudo observation at each cell in `cells` (index arrays)"""
        if not self.enabled:
            return np.zeros(np.shape(theta))
        obs = self.pseudo_obs[cells]
        var = self.pseudo_var[cells]
        return -0.5 * (obs - theta) ** 2 / var - 0.5 * np.log(2 * np.pi * var)


def interior_value(kind: ConstraintKind) -> float:
    """An inner-product value strictly inside the bounds of `kind`"""
    if kind.lower is not None and kind.upper is not None:
        return 0.5 * (kind.lower + kind.upper)
    if kind.lower is not None:
        return kind.lower + 1.0
    if kind.upper is not None:
        return kind.upper - 1.0
    return 0.0


def feasible_initial_state(N: int, M: int, T: int, D: int, kind: ConstraintKind) -> FactorState:
    """Constant factors with every <w_i, v_jt> equal to an interior value, so flat curves satisfy any monotone order"""
    value = interior_value(kind)
    W = np.ones((N, D)) / np.sqrt(D)
    V = np.full((M, T, D), value / np.sqrt(D))
    return FactorState(W, V)


def _solve_l1(
    design: sparse.csr_matrix,
    targets: npt.NDArray,
    cell_weights: npt.NDArray,
    cons: ConstraintSet,
    what: str,
) -> npt.NDArray:
    """
    min_x sum_n weight_n |target_n - design_n x| subject to cons.matrix x >= cons.bounds

    Residuals e_n >= |target_n - design_n x| are slack variables, so the problem is a single LP.
    """
    n, d = design.shape
    eye = sparse.identity(n, format="csr")
    blocks = [sparse.hstack([design, -eye]), sparse.hstack([-design, -eye])]
    rhs = [targets, -targets]
    if len(cons):
        blocks.append(sparse.hstack([sparse.csr_matrix(-cons.matrix), sparse.csr_matrix((len(cons), n))]))
        rhs.append(-cons.bounds)
    cost = np.concatenate([np.zeros(d), cell_weights])
    bounds = [(None, None)] * d + [(0, None)] * n
    result = linprog(cost, A_ub=sparse.vstack(blocks, format="csr"), b_ub=np.concatenate(rhs), bounds=bounds, method="highs")
    if result.status == 2:
        raise InfeasibleStateError("constraint system of %s is infeasible" % what)
    if not result.success:
        raise ConvergenceError("linear program for %s failed: %s" % (what, result.message))
    return result.x[:d]


def _row_lp(tensor: ObservationTensor, state: FactorState, kind: ConstraintKind, i: int) -> npt.NDArray:
    observed = tensor.observed_cells
    j_idx, t_idx = np.nonzero(observed[i])
    counts = tensor.counts[i, j_idx, t_idx]
    targets = tensor.sums[i, j_idx, t_idx] / counts
    cons = build_constraints("row", i, state, observed, kind, verify=False)
    return _solve_l1(sparse.csr_matrix(state.V[j_idx, t_idx]), targets, counts.astype(float), cons, "row %d" % i)


def _col_lp(tensor: ObservationTensor, state: FactorState, kind: ConstraintKind, j: int) -> npt.NDArray:
    observed = tensor.observed_cells
    T, D = state.V.shape[1:]
    i_idx, t_idx = np.nonzero(observed[:, j])
    counts = tensor.counts[i_idx, j, t_idx]
    targets = tensor.sums[i_idx, j, t_idx] / counts
    rows = np.repeat(np.arange(len(i_idx)), D)
    cols = (t_idx[:, None] * D + np.arange(D)[None, :]).reshape(-1)
    design = sparse.csr_matrix((state.W[i_idx].reshape(-1), (rows, cols)), shape=(len(i_idx), T * D))
    cons = build_constraints("col", j, state, observed, kind, verify=False)
    return _solve_l1(design, targets, counts.astype(float), cons, "column %d" % j).reshape(T, D)


def _objective(tensor: ObservationTensor, theta: npt.NDArray) -> float:
    means = np.where(tensor.observed_cells, tensor.sums / np.maximum(tensor.counts, 1), 0.0)
    return float(np.sum(tensor.counts * np.abs(means - theta)))


def _project(theta: npt.NDArray, kind: ConstraintKind) -> npt.NDArray:
    """Remove solver-tolerance violations so the pseudo observations satisfy the constraints exactly"""
    out = theta.copy()
    if kind.monotone is not None:
        N, M, _ = out.shape
        for i, j in np.ndindex(N, M):
            out[i, j] = pav_monotone_projection(out[i, j], kind.monotone)
    lower = -np.inf if kind.lower is None else kind.lower
    upper = np.inf if kind.upper is None else kind.upper
    return np.clip(out, lower, upper)


def init_constrained_als(
    Y: ObservationTensor,
    cons_kind: ConstraintKind,
    D: int,
    max_iters: int = 50,
    tol: float = 1e-4,
    inflation: float = 2.0,
    init: Optional[FactorState] = None,
) -> PseudoEpApprox:
    """
    Constrained least-absolute-deviation factorization and its inflated-variance surrogate

    Parameters
    ----------
    Y: ObservationTensor
        observations; each cell enters through its replicate mean, weighted by its replicate count
    cons_kind: ConstraintKind
        constraints on every observed inner product
    D: int
        factor dimension
    max_iters: int
        maximum number of column/row alternations
    tol: float
        stop once the relative decrease of the absolute-deviation loss falls below tol
    inflation: float
        multiplier on the mean squared residual of each (row, column) curve
    init: FactorState, optional
        starting factors, feasible; constant interior factors by default

    Returns
    -------
    PseudoEpApprox
        pseudo_var floored at 1e-4
    """
    N, M, T, _ = Y.dims
    if not Y.mask.any():
        raise DataError("cannot factorize a tensor without observations")
    state = init.copy() if init is not None else feasible_initial_state(N, M, T, D, cons_kind)
    observed = Y.observed_cells

    previous = _objective(Y, state.inner_products())
    trace = [previous]
    iterations = 0
    for iterations in range(1, max_iters + 1):
        for j in range(M):
            if observed[:, j].any():
                state.V[j] = _col_lp(Y, state, cons_kind, j)
        for i in range(N):
            if observed[i].any():
                state.W[i] = _row_lp(Y, state, cons_kind, i)
        current = _objective(Y, state.inner_products())
        trace.append(current)
        logger.debug("constrained ALS iteration %d", iterations, extra={"objective": current})
        if current <= 1e-12 or previous - current <= tol * max(previous, 1e-12):
            break
        previous = current

    pseudo_obs = _project(state.inner_products(), cons_kind)
    resid_sq = np.where(Y.mask, (Y.values - pseudo_obs[..., None]) ** 2, 0.0).sum(axis=(2, 3))
    pair_counts = Y.mask.sum(axis=(2, 3))
    overall = resid_sq.sum() / max(pair_counts.sum(), 1)
    msr = np.where(pair_counts > 0, resid_sq / np.maximum(pair_counts, 1), overall)
    pseudo_var = np.broadcast_to(np.maximum(inflation * msr, PSEUDO_VAR_FLOOR)[:, :, None], (N, M, T)).copy()

    logger.info(
        "constrained ALS finished after %d iterations",
        iterations,
        extra={"objective": trace[-1], "mean_pseudo_var": float(pseudo_var.mean())},
    )
    return PseudoEpApprox(
        pseudo_obs=pseudo_obs,
        pseudo_var=pseudo_var,
        inflation=inflation,
        enabled=True,
        als_state=state,
        iterations=iterations,
        objective_trace=trace,
    )
