"""Synthetic benchmark generators
A module of forward simulators: the constrained gamma-scale benchmark used to compare GASS with elliptical slice
sampling baselines, the nonstationary Poisson dynamical system with monotone plateau-and-jump rates, a Gaussian
functional matrix with smooth curves and occasional jumps, and microwell plates with pipetting error.

Every generator is deterministic given its numpy Generator.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass
import logging
from typing import Optional
import numpy as np
import numpy.typing as npt
from btf.model.constraints import ConstraintSet, box_monotone_constraints
from btf.model.dose_response import PlateExperiment
from btf.model.errors import ConfigError, ConvergenceError, DataError
from btf.model.tensor import FactorState, ObservationTensor

logger = logging.getLogger(__name__)

GASS_BENCHMARK_MEAN = np.array([0.95, 0.8, 0.75, 0.5, 0.29, 0.2, 0.17, 0.15, 0.15])
GASS_BENCHMARK_LOWER = 0.1
GASS_BENCHMARK_UPPER = 1.0
MAX_PROPOSALS = 10**6


# modules
def squared_exponential_covariance(d: int, tau: float = 0.1, b: float = 3.0) -> npt.NDArray:
    """Sigma_ij = tau exp(-(i - j)^2 / (2 b))"""
    idx = np.arange(d)
    return tau * np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2.0 * b))


def gass_benchmark_constraints(d: int = 9) -> ConstraintSet:
    """0.1 <= theta_i <= 1 and theta_i >= theta_{i+1}, shared by the generator and every sampler"""
    return box_monotone_constraints(d, GASS_BENCHMARK_LOWER, GASS_BENCHMARK_UPPER, "nonincreasing")


def sample_constrained_mvn(
    mu: npt.NDArray,
    sigma: npt.NDArray,
    cons: ConstraintSet,
    rng: np.random.Generator,
    size: int = 1,
    max_proposals: int = MAX_PROPOSALS,
    batch: int = 4096,
) -> npt.NDArray:
    """
    Exact draws from MVN(mu, sigma) restricted to cons, by batched rejection

    Raises
    ------
    ConvergenceError
        when more than max_proposals proposals are needed
    """
    accepted = []
    n_accepted, proposals = 0, 0
    while n_accepted < size:
        if proposals >= max_proposals:
            raise ConvergenceError(
                "rejection sampler accepted %d of %d draws in %d proposals" % (n_accepted, size, proposals)
            )
        n = min(batch, max_proposals - proposals)
        draws = rng.multivariate_normal(mu, sigma, size=n)
        proposals += n
        ok = np.all(cons.slack(draws) >= 0, axis=1)
        accepted.append(draws[ok])
        n_accepted += int(ok.sum())
    return np.concatenate(accepted)[:size]


@dataclass
class GassBenchmarkInstance:
    """
    Attributes
    ----------
    theta_true: npt.NDArray
        9 values in [0.1, 1], nonincreasing
    y: npt.NDArray
        9 x R gamma observations with shape a and scale theta_i
    mu, sigma: npt.NDArray
        prior mean and squared exponential covariance
    a, tau, b: float
        likelihood shape and kernel hyperparameters
    """

    theta_true: npt.NDArray
    y: npt.NDArray
    mu: npt.NDArray
    sigma: npt.NDArray
    a: float = 100.0
    tau: float = 0.1
    b: float = 3.0

    @property
    def constraints(self) -> ConstraintSet:
        return gass_benchmark_constraints(self.theta_true.size)


def gen_gass_benchmark(
    rng: np.random.Generator, R: int = 3, a: float = 100.0, tau: float = 0.1, b: float = 3.0
) -> GassBenchmarkInstance:
    """Draw theta from the constrained squared-exponential prior, then R gamma replicates per point"""
    mu = GASS_BENCHMARK_MEAN.copy()
    sigma = squared_exponential_covariance(mu.size, tau, b)
    theta = sample_constrained_mvn(mu, sigma, gass_benchmark_constraints(mu.size), rng)[0]
    y = rng.gamma(a, theta[:, None], size=(mu.size, R))
    return GassBenchmarkInstance(theta_true=theta, y=y, mu=mu, sigma=sigma, a=a, tau=tau, b=b)


@dataclass
class PoissonDynSysInstance:
    """
    Attributes
    ----------
    W_true: npt.NDArray
        N x D nonnegative row factors
    V_true: npt.NDArray
        M x T x D nonnegative curves, piecewise constant and nondecreasing in t
    Y: npt.NDArray
        N x M x T integer counts
    holdout: npt.NDArray
        N x M x T boolean, true for held-out cells
    """

    W_true: npt.NDArray
    V_true: npt.NDArray
    Y: npt.NDArray
    holdout: npt.NDArray

    @property
    def rates(self) -> npt.NDArray:
        return FactorState(self.W_true, self.V_true).inner_products()

    def tensor(self) -> ObservationTensor:
        """Training tensor with one replicate; held-out cells are unobserved"""
        return ObservationTensor(self.Y[..., None].astype(float), ~self.holdout[..., None])


def gen_poisson_dynsys(
    N: int = 11, M: int = 12, T: int = 20, D: int = 3, rng: Optional[np.random.Generator] = None, holdout: int = 3
) -> PoissonDynSysInstance:
    """
    Spike-and-slab increments, cumulative rate curves and Poisson counts

    u_jtd is exactly 0 with probability 0.8 and Ga(1, 1) otherwise (one gate per (j, t) shared across d), v_jtd is
    the running sum of u, w_id ~ Ga(1, 1) and y_ijt ~ Pois(<w_i, v_jt>). The upper-left holdout x holdout block of
    (row, column) pairs is held out over every t.
    """
    if min(N, M, T, D) < 1:
        raise ConfigError("all dimensions must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    gates = rng.random((M, T)) < 0.2
    slabs = rng.gamma(1.0, 1.0, size=(M, T, D))
    increments = np.where(gates[..., None], slabs, 0.0)
    V = np.cumsum(increments, axis=1)
    W = rng.gamma(1.0, 1.0, size=(N, D))
    rates = np.einsum("id,jtd->ijt", W, V)
    Y = rng.poisson(rates)
    mask = np.zeros((N, M, T), dtype=bool)
    mask[: min(holdout, N), : min(holdout, M)] = True
    return PoissonDynSysInstance(W_true=W, V_true=V, Y=Y, holdout=mask)


def smoothness_budget(T: int) -> float:
    """Bound on |second difference| of the smooth component of a generated curve"""
    return (np.pi / max(T - 1, 1)) ** 2


@dataclass
class FunctionalTruth:
    W: npt.NDArray
    V: npt.NDArray
    theta: npt.NDArray


def gen_gaussian_functional_matrix(
    N: int,
    M: int,
    T: int,
    D: int,
    jump_prob: float,
    noise_sd: float,
    rng: np.random.Generator,
    R: int = 3,
) -> tuple[ObservationTensor, FunctionalTruth]:
    """
    Smooth random curves with occasional jumps, observed with Gaussian noise

    Each v_j.d is a half-period cosine of amplitude at most 1 plus a step function whose jumps are N(0, 1) and occur
    with probability jump_prob at every grid point after the first. Rows are N(0, I_D).
    """
    if min(N, M, T, D, R) < 1:
        raise ConfigError("all dimensions must be at least 1")
    if not noise_sd >= 0:
        raise ConfigError("noise_sd must be nonnegative")
    t = np.arange(T)
    omega = np.pi / max(T - 1, 1)
    amplitude = rng.uniform(0.5, 1.0, size=(M, 1, D))
    phase = rng.uniform(0.0, 2 * np.pi, size=(M, 1, D))
    smooth = amplitude * np.cos(omega * t[None, :, None] + phase)
    gates = rng.random((M, T, D)) < jump_prob
    gates[:, 0] = False
    jumps = np.cumsum(np.where(gates, rng.standard_normal((M, T, D)), 0.0), axis=1)
    V = smooth + jumps
    W = rng.standard_normal((N, D))
    theta = np.einsum("id,jtd->ijt", W, V)
    values = theta[..., None] + noise_sd * rng.standard_normal((N, M, T, R))
    tensor = ObservationTensor(values, np.ones(values.shape, dtype=bool))
    return tensor, FunctionalTruth(W=W, V=V, theta=theta)


def gen_dose_response_plates(
    N: int,
    M: int,
    T: int,
    R: int,
    rng: np.random.Generator,
    D: int = 2,
    pipetting_sd: float = 0.1,
    replicate_sd: float = 0.02,
    control_replicates: int = 6,
    base_count: float = 1000.0,
) -> tuple[list[PlateExperiment], npt.NDArray]:
    """
    Forward-simulate one plate per (row, column) pair

    True viability theta_ijt = <w_i, v_jt> with w_i on the simplex and every v_j.d decaying from 1 at the lowest
    concentration, so curves start at full viability and are nonincreasing in (0, 1]. Each plate multiplies its
    treated wells by a pipetting factor N(1, pipetting_sd^2) and every well carries gamma noise of relative sd
    replicate_sd.

    Returns
    -------
    tuple[list[PlateExperiment], npt.NDArray]
        plates and the N x M x T true viabilities
    """
    if min(N, M, T, R, D) < 1 or control_replicates < 2:
        raise ConfigError("invalid plate dimensions")
    W = rng.dirichlet(np.ones(D), size=N)
    decay = rng.gamma(1.0, 0.5, size=(M, T, D))
    decay[:, 0] = 0.0
    V = np.exp(-np.cumsum(decay, axis=1))
    theta = np.einsum("id,jtd->ijt", W, V)

    shape = 1.0 / replicate_sd**2
    plates = []
    for i, j in np.ndindex(N, M):
        multiplier = max(rng.normal(1.0, pipetting_sd), 0.05)
        controls = rng.gamma(shape, base_count / shape, size=control_replicates)
        mean = base_count * multiplier * theta[i, j]
        doses = rng.gamma(shape, mean[:, None] / shape, size=(T, R))
        plates.append(PlateExperiment(controls, doses, i, j, plate_id="p%d_%d" % (i, j)))
    return plates, theta


def holdout_pairs(mask: npt.NDArray, n_pairs: int, rng: np.random.Generator) -> tuple[npt.NDArray, list]:
    """
    Hold out whole curves at random while every row and column keeps an observed pair

    Parameters
    ----------
    mask: npt.NDArray
        N x M x T x R observation mask
    n_pairs: int
        number of (row, column) pairs to remove

    Returns
    -------
    tuple[npt.NDArray, list]
        reduced mask and the held-out (i, j) pairs

    Raises
    ------
    DataError
        when n_pairs cannot be removed under the coverage condition
    """
    mask = np.asarray(mask, dtype=bool).copy()
    pair_observed = mask.any(axis=(2, 3))
    candidates = np.argwhere(pair_observed)
    held = []
    for idx in rng.permutation(len(candidates)):
        if len(held) == n_pairs:
            break
        i, j = candidates[idx]
        if pair_observed[i].sum() > 1 and pair_observed[:, j].sum() > 1:
            pair_observed[i, j] = False
            mask[i, j] = False
            held.append((int(i), int(j)))
    if len(held) < n_pairs:
        raise DataError("could only hold out %d of %d pairs without emptying a row or column" % (len(held), n_pairs))
    return mask, held
