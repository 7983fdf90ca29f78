"""Linear inequality constraints on inner products
A module that turns bounds and monotonicity requirements on the curves <w_i, v_jt> into linear constraint
systems D_c x >= gamma over the vector being resampled: a single row factor w_i, a flattened column curve
vec(V_j), or a free parameter vector such as the benchmark's theta.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass
from typing import Optional
import numpy as np
import numpy.typing as npt
from btf.model.errors import ConfigError, InfeasibleStateError
from btf.model.tensor import FactorState

FEASIBILITY_TOL = 1e-9
MONOTONE_DIRECTIONS = ("nonincreasing", "nondecreasing")


# modules
@dataclass(frozen=True)
class ConstraintKind:
    """
    Constraint family applied to every observed inner product

    Attributes
    ----------
    lower, upper: float, optional
        bounds on <w_i, v_jt>
    monotone: str, optional
        "nonincreasing" or "nondecreasing" along the dose axis
    """

    lower: Optional[float] = None
    upper: Optional[float] = None
    monotone: Optional[str] = None

    def __post_init__(self):
        if self.monotone is not None and self.monotone not in MONOTONE_DIRECTIONS:
            raise ConfigError("monotone must be one of %s, got %r" % (MONOTONE_DIRECTIONS, self.monotone))
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ConfigError("lower bound %g exceeds upper bound %g" % (self.lower, self.upper))

    @property
    def active(self) -> bool:
        return self.lower is not None or self.upper is not None or self.monotone is not None

    @classmethod
    def from_dict(cls, params: Optional[dict]) -> "ConstraintKind":
        if not params:
            return cls()
        return cls(
            lower=params.get("lower"),
            upper=params.get("upper"),
            monotone=params.get("monotone"),
        )

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "monotone": self.monotone}


UNCONSTRAINED = ConstraintKind()
NONNEGATIVE = ConstraintKind(lower=0.0)
UNIT_INTERVAL = ConstraintKind(lower=0.0, upper=1.0)


class ConstraintSet:
    """
    Linear inequalities D_c x >= gamma

    Parameters
    ----------
    matrix: npt.NDArray
        L_c x d constraint rows, L_c may be 0
    bounds: npt.NDArray
        length L_c right hand side
    current: npt.NDArray, optional
        state vector the system is built around; the constructor rejects it if infeasible
    """

    def __init__(self, matrix: npt.NDArray, bounds: npt.NDArray, current: Optional[npt.NDArray] = None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1)
        if self.matrix.shape[0] != self.bounds.shape[0]:
            raise ConfigError(
                "constraint matrix has %d rows but %d bounds" % (self.matrix.shape[0], self.bounds.shape[0])
            )
        if current is not None:
            self.verify(current)

    @classmethod
    def empty(cls, d: int) -> "ConstraintSet":
        return cls(np.zeros((0, d)), np.zeros(0))

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def slack(self, x: npt.NDArray) -> npt.NDArray:
        """D_c x - gamma, nonnegative where satisfied; works row-wise on a stack of points"""
        return np.asarray(x) @ self.matrix.T - self.bounds

    def satisfied(self, x: npt.NDArray, tol: float = FEASIBILITY_TOL) -> bool:
        if len(self) == 0:
            return True
        return bool(np.all(self.slack(x) >= -tol))

    def verify(self, x: npt.NDArray, tol: float = FEASIBILITY_TOL) -> None:
        if not self.satisfied(x, tol):
            worst = int(np.argmin(self.slack(x)))
            raise InfeasibleStateError(
                "constraint row %d violated by %.3g" % (worst, -float(self.slack(x)[worst]))
            )


def _bound_rows(vectors: npt.NDArray, kind: ConstraintKind) -> tuple[list, list]:
    rows, bounds = [], []
    n = vectors.shape[0]
    if kind.lower is not None:
        rows.append(vectors)
        bounds.append(np.full(n, kind.lower))
    if kind.upper is not None:
        rows.append(-vectors)
        bounds.append(np.full(n, -kind.upper))
    return rows, bounds


def _monotone_sign(kind: ConstraintKind) -> float:
    # nonincreasing: x_t - x_{t+1} >= 0
    return 1.0 if kind.monotone == "nonincreasing" else -1.0


def build_constraints(
    context: str,
    index: int,
    state: FactorState,
    observed: npt.NDArray,
    kind: ConstraintKind,
    verify: bool = True,
) -> ConstraintSet:
    """
    Constraint system for one row or column update

    Parameters
    ----------
    context: str
        "row" to resample w_index, "col" to resample vec(V_index) in t-major order (entry t*D + d)
    index: int
        the row or column being resampled
    state: FactorState
        current factors; the other side's factors enter the constraint rows
    observed: npt.NDArray[bool]
        (N,M,T) cells with at least one observed replicate
    kind: ConstraintKind
        bounds and monotonicity to encode
    verify: bool
        check the current value of the resampled vector; LP solutions within solver tolerance skip this

    Returns
    -------
    ConstraintSet
        feasible at the current value of the resampled vector when `verify`
    """
    W, V = state.W, state.V
    M, T, D = V.shape
    if context == "row":
        current = W[index]
        j_idx, t_idx = np.nonzero(observed[index])
        rows, bounds = _bound_rows(V[j_idx, t_idx], kind)
        if kind.monotone is not None and T > 1:
            cols = np.flatnonzero(observed[index].any(axis=1))
            diffs = _monotone_sign(kind) * (V[cols, :-1] - V[cols, 1:])
            rows.append(diffs.reshape(-1, D))
            bounds.append(np.zeros(len(cols) * (T - 1)))
        dim = D
    elif context == "col":
        current = V[index].reshape(-1)
        i_idx, t_idx = np.nonzero(observed[:, index])
        placed = np.zeros((len(i_idx), T, D))
        placed[np.arange(len(i_idx)), t_idx] = W[i_idx]
        rows, bounds = _bound_rows(placed.reshape(len(i_idx), T * D), kind)
        if kind.monotone is not None and T > 1:
            members = np.flatnonzero(observed[:, index].any(axis=1))
            sign = _monotone_sign(kind)
            mono = np.zeros((len(members), T - 1, T, D))
            steps = np.arange(T - 1)
            for n, i in enumerate(members):
                mono[n, steps, steps] = sign * W[i]
                mono[n, steps, steps + 1] = -sign * W[i]
            rows.append(mono.reshape(-1, T * D))
            bounds.append(np.zeros(len(members) * (T - 1)))
        dim = T * D
    else:
        raise ConfigError("context must be 'row' or 'col', got %r" % context)

    if not rows:
        return ConstraintSet(np.zeros((0, dim)), np.zeros(0))
    return ConstraintSet(np.vstack(rows), np.concatenate(bounds), current=current if verify else None)


def box_monotone_constraints(
    d: int,
    lower: Optional[float],
    upper: Optional[float],
    monotone: Optional[str],
) -> ConstraintSet:
    """Bounds and adjacent-order constraints acting directly on a length-d vector"""
    kind = ConstraintKind(lower=lower, upper=upper, monotone=monotone)
    eye = np.eye(d)
    rows, bounds = _bound_rows(eye, kind)
    if kind.monotone is not None and d > 1:
        rows.append(_monotone_sign(kind) * (eye[:-1] - eye[1:]))
        bounds.append(np.zeros(d - 1))
    if not rows:
        return ConstraintSet.empty(d)
    return ConstraintSet(np.vstack(rows), np.concatenate(bounds))


def check_state_feasible(
    state: FactorState, observed: npt.NDArray, kind: ConstraintKind, tol: float = FEASIBILITY_TOL
) -> bool:
    """True when every observed inner product satisfies the constraint family"""
    if not kind.active:
        return True
    theta = state.inner_products()
    obs = theta[observed]
    if kind.lower is not None and np.any(obs < kind.lower - tol):
        return False
    if kind.upper is not None and np.any(obs > kind.upper + tol):
        return False
    if kind.monotone is not None:
        pairs = observed.any(axis=2)
        steps = _monotone_sign(kind) * (theta[:, :, :-1] - theta[:, :, 1:])
        if np.any(steps[pairs] < -tol):
            return False
    return True
