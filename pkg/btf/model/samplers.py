"""Stateless MCMC kernels
A module of the sampling primitives used by the Gibbs engine and the benchmarks: generalized analytic slice
sampling (GASS) under linear constraints, classic elliptical slice sampling, Polya-Gamma draws, horseshoe+
inverse-gamma updates, multivariate normal draws from (banded) precision matrices and the pool adjacent
violators projection. Every kernel is pure given an explicit numpy Generator.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass
import logging
from typing import Callable, Optional, Union
import numpy as np
import numpy.typing as npt
from polyagamma import random_polyagamma
from scipy import linalg, sparse
from scipy.stats import invgamma
from sklearn.isotonic import isotonic_regression
from btf.model.constraints import ConstraintSet, FEASIBILITY_TOL
from btf.model.errors import CholeskyError, ConfigError, DataError, InfeasibleStateError
from btf.model.tensor import LocalShrinkage

logger = logging.getLogger(__name__)

LogLik = Callable[[npt.NDArray], float]

PG_EXACT_CHUNK = 4.0
PG_NORMAL_ABOVE = 170.0
SHRINKAGE_FLOOR = 1e-12
SHRINKAGE_CEIL = 1e12
SHRINKAGE_VARIANTS = ("derived", "paper_literal")


# modules
@dataclass(frozen=True)
class GassConfig:
    """
    Attributes
    ----------
    grid_size: int
        number of angles in the grid over [-pi, pi]
    include_current: bool
        append theta = 0 (the current point) to the candidates so a qualifying candidate always exists
    debug: bool
        raise instead of silently dropping a grid angle whose point violates a constraint
    """

    grid_size: int = 512
    include_current: bool = True
    debug: bool = False

    def __post_init__(self):
        if self.grid_size < 16:
            raise ConfigError("grid_size must be at least 16, got %d" % self.grid_size)

    @classmethod
    def from_dict(cls, params: Optional[dict]) -> "GassConfig":
        return cls(**(params or {}))


@dataclass
class GassStats:
    """Counters of GASS steps whose angle set was empty or that fell back to the current point"""

    steps: int = 0
    degenerate: int = 0
    fallbacks: int = 0

    def merge(self, other: "GassStats") -> None:
        self.steps += other.steps
        self.degenerate += other.degenerate
        self.fallbacks += other.fallbacks


class AngleIntervals:
    """
    Sorted, disjoint closed intervals inside [-pi, pi]
    """

    def __init__(self, intervals: list[tuple[float, float]]):
        self.intervals = sorted((float(lo), float(hi)) for lo, hi in intervals if hi >= lo)

    @classmethod
    def full(cls) -> "AngleIntervals":
        return cls([(-np.pi, np.pi)])

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def contains(self, theta: npt.NDArray) -> npt.NDArray:
        theta = np.asarray(theta, dtype=float)
        inside = np.zeros(theta.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (theta >= lo) & (theta <= hi)
        return inside

    def intersect(self, other: "AngleIntervals") -> "AngleIntervals":
        out = []
        a, b = 0, 0
        while a < len(self.intervals) and b < len(other.intervals):
            lo = max(self.intervals[a][0], other.intervals[b][0])
            hi = min(self.intervals[a][1], other.intervals[b][1])
            if lo <= hi:
                out.append((lo, hi))
            if self.intervals[a][1] < other.intervals[b][1]:
                a += 1
            else:
                b += 1
        return AngleIntervals(out)

    def __repr__(self) -> str:
        return "AngleIntervals(%s)" % self.intervals


def _phase_form(a: npt.NDArray, b: npt.NDArray, c: npt.NDArray) -> tuple[npt.NDArray, npt.NDArray]:
    """
    Write a cos(theta) + b sin(theta) >= c as |wrap(theta - phase)| <= half_width

    half_width is pi when every angle is valid and -1 when none is.
    """
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    radius = np.hypot(a, b)
    phase = np.arctan2(b, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(radius > 0, c / np.where(radius > 0, radius, 1.0), np.where(c <= 0, -np.inf, np.inf))
    half_width = np.where(
        ratio <= -1.0, np.pi, np.where(ratio > 1.0, -1.0, np.arccos(np.clip(ratio, -1.0, 1.0)))
    )
    return phase, half_width


def _wrap(theta: npt.NDArray) -> npt.NDArray:
    return (theta + np.pi) % (2 * np.pi) - np.pi


def constraint_intervals(a: float, b: float, c: float) -> AngleIntervals:
    """
    Angles on the ellipse that satisfy one linear constraint

    Parameters
    ----------
    a, b, c: float
        a = d^T(x - mu), b = d^T v and c = gamma - d^T mu for one constraint row d^T x' >= gamma

    Returns
    -------
    AngleIntervals
        {theta in [-pi, pi] : a cos(theta) + b sin(theta) >= c}; empty when the constraint fails everywhere
    """
    phase, half_width = (float(v) for v in _phase_form(a, b, c))
    if half_width < 0:
        return AngleIntervals([])
    if half_width >= np.pi:
        return AngleIntervals.full()
    lo, hi = phase - half_width, phase + half_width
    if lo < -np.pi:
        return AngleIntervals([(-np.pi, hi), (lo + 2 * np.pi, np.pi)])
    if hi > np.pi:
        return AngleIntervals([(-np.pi, hi - 2 * np.pi), (lo, np.pi)])
    return AngleIntervals([(lo, hi)])


def feasible_region(cons: ConstraintSet, centred: npt.NDArray, v: npt.NDArray, mu: npt.NDArray) -> AngleIntervals:
    """Intersection of the angle sets of every constraint row"""
    region = AngleIntervals.full()
    a = cons.matrix @ centred
    b = cons.matrix @ v
    c = cons.bounds - cons.matrix @ mu
    for a_i, b_i, c_i in zip(a, b, c):
        region = region.intersect(constraint_intervals(a_i, b_i, c_i))
        if region.is_empty:
            break
    return region


def _grid_mask(grid: npt.NDArray, a: npt.NDArray, b: npt.NDArray, c: npt.NDArray) -> npt.NDArray:
    """Grid angles inside every constraint's interval, evaluated for all rows at once"""
    if a.size == 0:
        return np.ones(grid.shape, dtype=bool)
    phase, half_width = _phase_form(a, b, c)
    distance = np.abs(_wrap(grid[:, None] - phase[None, :]))
    return np.all(distance <= half_width[None, :], axis=1)


class GaussianFactor:
    """
    Cholesky factor of a covariance or precision matrix used for zero-mean draws and solves

    Parameters
    ----------
    kind: str
        "covariance" (lower factor L, Sigma = L L^T), "precision" (upper factor U, Lambda = U^T U) or
        "banded" (upper banded factor of a sparse precision)
    factor: npt.NDArray
        the triangular factor, in scipy banded storage for "banded"
    bandwidth: int
        number of super-diagonals for "banded"
    """

    def __init__(self, kind: str, factor: npt.NDArray, bandwidth: int = 0):
        self.kind = kind
        self.factor = factor
        self.bandwidth = bandwidth

    @property
    def dim(self) -> int:
        return self.factor.shape[1]

    @classmethod
    def from_covariance(cls, sigma: npt.NDArray, name: str = "covariance") -> "GaussianFactor":
        try:
            chol = linalg.cholesky(np.atleast_2d(np.asarray(sigma, dtype=float)), lower=True)
        except linalg.LinAlgError as err:
            raise CholeskyError("Cholesky factorization of the %s failed: %s" % (name, err)) from err
        return cls("covariance", chol)

    @classmethod
    def from_precision(
        cls, precision: Union[npt.NDArray, sparse.spmatrix], name: str = "precision"
    ) -> "GaussianFactor":
        if sparse.issparse(precision):
            band, storage = _upper_banded(precision)
            try:
                chol = linalg.cholesky_banded(storage, lower=False)
            except linalg.LinAlgError as err:
                raise CholeskyError("Cholesky factorization of the %s failed: %s" % (name, err)) from err
            return cls("banded", chol, band)
        try:
            chol = linalg.cholesky(np.atleast_2d(np.asarray(precision, dtype=float)), lower=False)
        except linalg.LinAlgError as err:
            raise CholeskyError("Cholesky factorization of the %s failed: %s" % (name, err)) from err
        return cls("precision", chol)

    def draw(self, rng: np.random.Generator) -> npt.NDArray:
        """Zero-mean draw with the represented covariance"""
        z = rng.standard_normal(self.dim)
        if self.kind == "covariance":
            return self.factor @ z
        if self.kind == "precision":
            return linalg.solve_triangular(self.factor, z, lower=False)
        return linalg.solve_banded((0, self.bandwidth), self.factor, z)

    def solve(self, h: npt.NDArray) -> npt.NDArray:
        """Lambda^{-1} h for a precision factor"""
        if self.kind == "precision":
            return linalg.cho_solve((self.factor, False), h)
        if self.kind == "banded":
            return linalg.cho_solve_banded((self.factor, False), h)
        raise ConfigError("solve needs a precision factor")


def _upper_banded(matrix: sparse.spmatrix) -> tuple[int, npt.NDArray]:
    """Upper band storage ab[u + i - j, j] = A[i, j] of a symmetric sparse matrix"""
    coo = sparse.coo_matrix(matrix)
    n = coo.shape[0]
    upper = coo.col >= coo.row
    rows, cols, data = coo.row[upper], coo.col[upper], coo.data[upper]
    band = int(np.max(cols - rows)) if len(rows) else 0
    storage = np.zeros((band + 1, n))
    np.add.at(storage, (band + rows - cols, cols), data)
    return band, storage


def _as_factor(sigma: Union[npt.NDArray, GaussianFactor]) -> GaussianFactor:
    if isinstance(sigma, GaussianFactor):
        return sigma
    return GaussianFactor.from_covariance(sigma)


def mvn_sample_precision(
    h: npt.NDArray, precision: Union[npt.NDArray, sparse.spmatrix], rng: np.random.Generator
) -> npt.NDArray:
    """
    Draw from MVN(Lambda^{-1} h, Lambda^{-1})

    Parameters
    ----------
    h: npt.NDArray
        information vector
    precision: npt.NDArray or sparse matrix
        symmetric positive definite Lambda; sparse input is factorized in band storage so the cost is linear in
        the dimension for a fixed bandwidth
    rng: np.random.Generator

    Returns
    -------
    npt.NDArray
        one draw
    """
    factor = GaussianFactor.from_precision(precision)
    return factor.solve(np.asarray(h, dtype=float)) + factor.draw(rng)


def gass_step(
    x: npt.NDArray,
    mu: npt.NDArray,
    sigma: Union[npt.NDArray, GaussianFactor],
    loglik: LogLik,
    cons: Optional[ConstraintSet],
    cfg: GassConfig,
    rng: np.random.Generator,
    stats: Optional[GassStats] = None,
) -> npt.NDArray:
    """
    One generalized analytic slice sampling step

    Targets exp(loglik(x)) MVN(x; mu, Sigma) 1[D_c x >= gamma]. The valid angles of the ellipse through x are
    computed analytically per constraint row, a grid with a random offset discretizes them, and the output is
    drawn uniformly among grid candidates above the slice threshold.

    Parameters
    ----------
    x: npt.NDArray
        feasible current point
    mu: npt.NDArray
        prior mean
    sigma: npt.NDArray or GaussianFactor
        prior covariance, or a precomputed factor of it (or of its precision)
    loglik: Callable
        log-likelihood of a point
    cons: ConstraintSet, optional
        linear constraints; None for an unconstrained prior
    cfg: GassConfig
    rng: np.random.Generator
    stats: GassStats, optional
        counters updated in place

    Returns
    -------
    npt.NDArray
        next point, always feasible
    """
    x = np.asarray(x, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), x.shape)
    if cons is None:
        cons = ConstraintSet.empty(x.size)
    cons.verify(x)
    current_ll = loglik(x)
    if not np.isfinite(current_ll):
        raise InfeasibleStateError("log-likelihood is not finite at the current point")
    if stats is not None:
        stats.steps += 1

    threshold = current_ll + np.log(rng.uniform())
    v = _as_factor(sigma).draw(rng)
    centred = x - mu

    grid = -np.pi + (np.arange(cfg.grid_size) + rng.uniform()) * (2 * np.pi / cfg.grid_size)
    a = cons.matrix @ centred
    b = cons.matrix @ v
    c = cons.bounds - cons.matrix @ mu
    angles = grid[_grid_mask(grid, a, b, c)]

    if angles.size and len(cons):
        points = np.outer(np.cos(angles), centred) + np.outer(np.sin(angles), v) + mu
        ok = np.all(cons.slack(points) >= -FEASIBILITY_TOL, axis=1)
        if cfg.debug and not ok.all():
            raise InfeasibleStateError("%d grid angles violate their constraints" % int((~ok).sum()))
        angles = angles[ok]

    if angles.size == 0:
        if stats is not None:
            stats.degenerate += 1
        return x.copy()

    if cfg.include_current:
        angles = np.append(angles, 0.0)
    for idx in rng.permutation(angles.size):
        theta = angles[idx]
        proposal = centred * np.cos(theta) + v * np.sin(theta) + mu
        if loglik(proposal) >= threshold:
            if theta == 0.0 and cfg.include_current and idx == angles.size - 1 and stats is not None:
                stats.fallbacks += 1
            return proposal

    if stats is not None:
        stats.fallbacks += 1
    return x.copy()


def ess_step(
    x: npt.NDArray,
    mu: npt.NDArray,
    sigma: Union[npt.NDArray, GaussianFactor],
    loglik: LogLik,
    rng: np.random.Generator,
    max_shrinks: int = 200,
) -> npt.NDArray:
    """
    Classic elliptical slice sampling with bracket shrinking, stationary for exp(loglik) MVN(mu, Sigma)

    Constraints can be folded into loglik by returning -inf where they are violated.
    """
    x = np.asarray(x, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), x.shape)
    current_ll = loglik(x)
    if not np.isfinite(current_ll):
        raise InfeasibleStateError("log-likelihood is not finite at the current point")

    threshold = current_ll + np.log(rng.uniform())
    v = _as_factor(sigma).draw(rng)
    centred = x - mu
    theta = rng.uniform(0.0, 2 * np.pi)
    lo, hi = theta - 2 * np.pi, theta
    for _ in range(max_shrinks):
        proposal = centred * np.cos(theta) + v * np.sin(theta) + mu
        if loglik(proposal) >= threshold:
            return proposal
        if theta < 0:
            lo = theta
        else:
            hi = theta
        theta = rng.uniform(lo, hi)
    return x.copy()


def polya_gamma_mean(b: npt.NDArray, c: npt.NDArray) -> npt.NDArray:
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    safe = np.where(c > 1e-8, c, 1.0)
    return np.where(c > 1e-8, b / (2 * safe) * np.tanh(safe / 2), b / 4)


def polya_gamma_var(b: npt.NDArray, c: npt.NDArray) -> npt.NDArray:
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    safe = np.where(c > 1e-4, c, 1.0)
    exact = b / (4 * safe**3) * (np.sinh(safe) - safe) / np.cosh(safe / 2) ** 2
    return np.where(c > 1e-4, exact, b / 24)


def polya_gamma_sample(
    b: Union[float, npt.NDArray], c: Union[float, npt.NDArray], rng: np.random.Generator
) -> Union[float, npt.NDArray]:
    """
    Draw PG(b, c)

    Parameters
    ----------
    b: float or npt.NDArray
        shape, strictly positive
    c: float or npt.NDArray
        tilting parameter, broadcast against b
    rng: np.random.Generator

    Returns
    -------
    float or npt.NDArray
        strictly positive draws; b in (0, 4] uses the exact alternating series, larger b sums independent exact
        draws of at most 4 each, and b above 170 uses a moment-matched normal
    """
    scalar = np.ndim(b) == 0 and np.ndim(c) == 0
    b_arr, c_arr = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(c, dtype=float))
    b_arr, c_arr = b_arr.reshape(-1), c_arr.reshape(-1)
    if np.any(~(b_arr > 0)):
        raise DataError("Polya-Gamma shape b must be strictly positive")

    out = np.zeros(b_arr.shape)
    large = b_arr > PG_NORMAL_ABOVE
    if np.any(large):
        mean = polya_gamma_mean(b_arr[large], c_arr[large])
        sd = np.sqrt(polya_gamma_var(b_arr[large], c_arr[large]))
        out[large] = np.maximum(mean + sd * rng.standard_normal(int(large.sum())), np.finfo(float).tiny)

    exact = ~large
    if np.any(exact):
        full_chunks = np.floor(b_arr / PG_EXACT_CHUNK).astype(int)
        remainder = b_arr - PG_EXACT_CHUNK * full_chunks
        for q in range(int(full_chunks[exact].max(initial=0))):
            sel = exact & (full_chunks > q)
            out[sel] += random_polyagamma(PG_EXACT_CHUNK, c_arr[sel], method="alternate", random_state=rng)
        sel = exact & (remainder > 1e-12)
        if np.any(sel):
            out[sel] += random_polyagamma(remainder[sel], c_arr[sel], method="alternate", random_state=rng)

    out = out.reshape(np.shape(np.broadcast_arrays(np.asarray(b), np.asarray(c))[0]))
    return float(out) if scalar else out


def horseshoe_conditional_params(
    row_norms_sq: npt.NDArray, rho2: float, D: int, c: npt.NDArray, variant: str = "derived"
) -> tuple[float, npt.NDArray]:
    """
    Shape and rate of the inverse-gamma conditional of tau2 per difference row

    "derived" is the full conditional of tau2_{jl} under (Delta V_j)_l ~ MVN(0, rho2 tau2 I_D):
    shape (D+1)/2 and rate ||(Delta V_j)_l||^2 / (2 rho2) + 1/c. "paper_literal" uses shape D+1 and rate
    ||(Delta V_j)_l||^2 / 2 + 1/c.
    """
    if variant == "derived":
        return (D + 1) / 2.0, np.asarray(row_norms_sq) / (2.0 * rho2) + 1.0 / np.asarray(c)
    if variant == "paper_literal":
        return float(D + 1), np.asarray(row_norms_sq) / 2.0 + 1.0 / np.asarray(c)
    raise ConfigError("shrinkage_update must be one of %s, got %r" % (SHRINKAGE_VARIANTS, variant))


def _inv_gamma(shape: Union[float, npt.NDArray], rate: npt.NDArray, rng: np.random.Generator) -> npt.NDArray:
    draw = invgamma.rvs(a=shape, scale=rate, random_state=rng)
    return np.clip(np.atleast_1d(draw), SHRINKAGE_FLOOR, SHRINKAGE_CEIL)


def horseshoe_block_update(
    row_norms_sq: npt.NDArray,
    rho2: float,
    D: int,
    local: LocalShrinkage,
    rng: np.random.Generator,
    variant: str = "derived",
) -> LocalShrinkage:
    """
    Redraw tau2, c, phi and eta of one column from their inverse-gamma conditionals

    Parameters
    ----------
    row_norms_sq: npt.NDArray
        squared norm of every difference row (Delta V_j)_l, length L
    rho2: float
        global shrinkage
    D: int
        factor dimension
    local: LocalShrinkage
        current values for column j
    rng: np.random.Generator
    variant: str
        "derived" or "paper_literal" tau2 conditional

    Returns
    -------
    LocalShrinkage
        new values, floored away from 0 and capped for numerical safety
    """
    row_norms_sq = np.asarray(row_norms_sq, dtype=float)
    if np.any(row_norms_sq < 0) or rho2 <= 0 or D < 1:
        raise DataError("row norms must be nonnegative, rho2 and D positive")
    for name in ("tau2", "c", "phi", "eta"):
        if np.any(~(getattr(local, name) > 0)):
            raise DataError("shrinkage %s must be strictly positive" % name)

    shape, rate = horseshoe_conditional_params(row_norms_sq, rho2, D, local.c, variant)
    tau2 = _inv_gamma(shape, rate, rng)
    c = _inv_gamma(1.0, 1.0 / tau2 + 1.0 / local.phi, rng)
    phi = _inv_gamma(1.0, 1.0 / c + 1.0 / local.eta, rng)
    eta = _inv_gamma(1.0, 1.0 / phi + 1.0, rng)
    return LocalShrinkage(tau2=tau2, c=c, phi=phi, eta=eta)


def sample_horseshoe_prior(shape: tuple, rng: np.random.Generator) -> LocalShrinkage:
    """Forward draw of the horseshoe+ hierarchy through its inverse-gamma representation"""
    eta = _inv_gamma(0.5, np.ones(shape), rng).reshape(shape)
    phi = _inv_gamma(0.5, 1.0 / eta, rng).reshape(shape)
    c = _inv_gamma(0.5, 1.0 / phi, rng).reshape(shape)
    tau2 = _inv_gamma(0.5, 1.0 / c, rng).reshape(shape)
    return LocalShrinkage(tau2=tau2, c=c, phi=phi, eta=eta)


def pav_monotone_projection(y: npt.NDArray, direction: str = "nondecreasing") -> npt.NDArray:
    """
    L2 projection onto monotone sequences by pool adjacent violators

    The nonincreasing case negates, projects onto nondecreasing sequences and negates back.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("cannot project an empty vector")
    if not np.all(np.isfinite(y)):
        raise DataError("projection needs finite values")
    if direction == "nondecreasing":
        return np.asarray(isotonic_regression(y, increasing=True), dtype=float)
    if direction == "nonincreasing":
        return -np.asarray(isotonic_regression(-y, increasing=True), dtype=float)
    raise ConfigError("direction must be 'nondecreasing' or 'nonincreasing', got %r" % direction)
