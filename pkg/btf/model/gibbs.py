"""Gibbs sampler for Bayesian tensor filtering
A module that runs full Gibbs sweeps over the row factors, the functional column factors, the horseshoe+ trend
filtering scales and the global variances. The likelihood decides how the factor blocks are redrawn: conjugate
Gaussian updates, Polya-Gamma augmented binomial updates, or GASS steps under linear constraints for any
black-box likelihood, conditioned by the pseudo-EP surrogate.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass, field
import logging
import time
from typing import Callable, Optional, Union
import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed
from scipy import sparse
from btf.model.constraints import ConstraintKind, build_constraints, check_state_feasible
from btf.model.errors import ConfigError, DataError, InfeasibleStateError
from btf.model.likelihoods import (
    BinomialLikelihood,
    BlackBoxLikelihood,
    GaussianLikelihood,
    LikelihoodSpec,
    likelihood_from_dict,
)
from btf.model.pseudo_ep import PseudoEpApprox, feasible_initial_state, init_constrained_als
from btf.model.samplers import (
    SHRINKAGE_VARIANTS,
    GassConfig,
    GassStats,
    GaussianFactor,
    gass_step,
    horseshoe_block_update,
    mvn_sample_precision,
    polya_gamma_sample,
)
from btf.model.tensor import (
    FactorState,
    ObservationTensor,
    PosteriorSamples,
    ShrinkageState,
    is_retained,
    retained_count,
)
from btf.model.trend_filtering import CompositeDiffMatrix, build_composite_tf_matrix, build_prior_precision

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("D", "k", "rho2", "sweeps", "burn_in", "thin", "likelihood")
GAMMA_PRIOR_SHAPE = 0.1
GAMMA_PRIOR_RATE = 0.1

PHASE_ROWS, PHASE_COLS, PHASE_PG_ROWS, PHASE_PG_COLS, PHASE_SHRINKAGE, PHASE_GLOBALS = range(6)


# modules
@dataclass(frozen=True)
class RngStreams:
    """
    Counter-derived random streams: the generator of a task depends only on (seed, sweep, phase, index)
    """

    seed: int
    sweep: int
    phase: int

    def for_index(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.sweep, self.phase, index])


RngLike = Union[np.random.Generator, RngStreams]


def _stream(rng: RngLike, index: int) -> np.random.Generator:
    return rng.for_index(index) if isinstance(rng, RngStreams) else rng


def _phase_streams(rng: RngLike, phase: int) -> RngLike:
    """The stream of another phase of the same sweep; a plain Generator is shared"""
    return RngStreams(rng.seed, rng.sweep, phase) if isinstance(rng, RngStreams) else rng


def _map(fn: Callable, indices, threads: int) -> list:
    """Apply fn to every index, on a thread pool when threads > 1"""
    if threads > 1:
        return Parallel(n_jobs=threads, prefer="threads")(delayed(fn)(i) for i in indices)
    return [fn(i) for i in indices]


@dataclass
class FitConfig:
    """
    Run parameters of one fit

    Attributes
    ----------
    D: int
        factor dimension
    k: int
        trend filtering order
    rho2: float
        global shrinkage, fixed for the run
    sweeps, burn_in, thin: int
        total sweeps, discarded sweeps and thinning stride of the retained samples
    likelihood: LikelihoodSpec
    seed: int
    gass: GassConfig
    shrinkage_update: str
        "derived" or "paper_literal" inverse-gamma conditional of tau2
    ep_inflation: float
        multiplier of the pseudo-EP residual variances
    ep_enabled: bool
        condition the black-box sampler on the pseudo-EP surrogate
    ep_refresh_after_burn_in: bool
        refit the surrogate from the current state once burn-in ends
    """

    D: int
    k: int
    rho2: float
    sweeps: int
    burn_in: int
    thin: int
    likelihood: LikelihoodSpec
    seed: int = 0
    gass: GassConfig = field(default_factory=GassConfig)
    shrinkage_update: str = "derived"
    ep_inflation: float = 2.0
    ep_enabled: bool = True
    ep_refresh_after_burn_in: bool = False
    als_max_iters: int = 50
    als_tol: float = 1e-4
    checkpoint_every: int = 500
    threads: int = 1
    sample_nu2: bool = True
    log_every: int = 100

    def __post_init__(self):
        if self.D < 1:
            raise ConfigError("D must be at least 1, got %d" % self.D)
        if self.k < 0:
            raise ConfigError("k must be at least 0, got %d" % self.k)
        if not self.rho2 > 0:
            raise ConfigError("rho2 must be positive, got %r" % self.rho2)
        if self.thin < 1:
            raise ConfigError("thin must be at least 1, got %d" % self.thin)
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < sweeps, got %d and %d" % (self.burn_in, self.sweeps))
        if self.shrinkage_update not in SHRINKAGE_VARIANTS:
            raise ConfigError("shrinkage_update must be one of %s" % (SHRINKAGE_VARIANTS,))
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not self.ep_inflation > 0:
            raise ConfigError("ep_inflation must be positive")
        if self.threads < 1 or self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("threads, checkpoint_every and log_every must be at least 1")

    @property
    def constraints(self) -> ConstraintKind:
        return self.likelihood.constraints

    @classmethod
    def from_dict(cls, params: dict) -> "FitConfig":
        """
        Validate a run dictionary (as loaded from constants/base_params_fit.json)

        Raises
        ------
        ConfigError
            naming the first missing required key, or describing an invalid range
        """
        for key in REQUIRED_KEYS:
            if key not in params:
                raise ConfigError("missing required config key '%s'" % key)
        likelihood = params["likelihood"]
        if isinstance(likelihood, str):
            likelihood = {"kind": likelihood}
        options = {
            key: params[key]
            for key in (
                "seed",
                "shrinkage_update",
                "ep_inflation",
                "ep_enabled",
                "ep_refresh_after_burn_in",
                "als_max_iters",
                "als_tol",
                "checkpoint_every",
                "threads",
                "sample_nu2",
                "log_every",
            )
            if key in params
        }
        if "nu2" in params and "nu2" not in likelihood:
            likelihood = dict(likelihood, nu2=params["nu2"])
        return cls(
            D=int(params["D"]),
            k=int(params["k"]),
            rho2=float(params["rho2"]),
            sweeps=int(params["sweeps"]),
            burn_in=int(params["burn_in"]),
            thin=int(params["thin"]),
            likelihood=likelihood_from_dict(likelihood, params.get("constraints")),
            gass=GassConfig.from_dict(params.get("gass")),
            **options,
        )

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "k": self.k,
            "rho2": self.rho2,
            "sweeps": self.sweeps,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "likelihood": self.likelihood.to_dict(),
            "constraints": self.constraints.to_dict(),
            "gass": {"grid_size": self.gass.grid_size, "include_current": self.gass.include_current, "debug": self.gass.debug},
            "shrinkage_update": self.shrinkage_update,
            "ep_inflation": self.ep_inflation,
            "ep_enabled": self.ep_enabled,
            "ep_refresh_after_burn_in": self.ep_refresh_after_burn_in,
            "als_max_iters": self.als_max_iters,
            "als_tol": self.als_tol,
            "checkpoint_every": self.checkpoint_every,
            "threads": self.threads,
            "sample_nu2": self.sample_nu2,
            "log_every": self.log_every,
        }


def _row_system(
    i: int, V: npt.NDArray, precision: npt.NDArray, info: npt.NDArray, sigma2: float
) -> tuple[npt.NDArray, npt.NDArray]:
    """Posterior precision and information of w_i given weighted Gaussian data on its cells"""
    D = V.shape[2]
    Lambda = np.einsum("jt,jtd,jte->de", precision[i], V, V) + np.eye(D) / sigma2
    h = np.einsum("jt,jtd->d", info[i], V)
    return Lambda, h


def _col_system(
    j: int, W: npt.NDArray, precision: npt.NDArray, info: npt.NDArray, prior: sparse.spmatrix
) -> tuple[sparse.csr_matrix, npt.NDArray]:
    """
    Posterior precision and information of vec(V_j) in t-major order

    The prior is kron(Delta^T Tau Delta, I_D); the data add one D x D block per grid point, so the result is banded.
    """
    D = W.shape[1]
    blocks = np.einsum("it,id,ie->tde", precision[:, j], W, W)
    Lambda = sparse.kron(prior, sparse.identity(D)) + sparse.block_diag(list(blocks))
    h = np.einsum("it,id->td", info[:, j], W).reshape(-1)
    return sparse.csr_matrix(Lambda), h


def _conjugate_rows(
    state: FactorState, precision: npt.NDArray, info: npt.NDArray, sigma2: float, rng: RngLike, threads: int = 1
) -> FactorState:
    def draw(i):
        Lambda, h = _row_system(i, state.V, precision, info, sigma2)
        return mvn_sample_precision(h, Lambda, _stream(rng, i))

    W = np.array(_map(draw, range(state.W.shape[0]), threads)).reshape(state.W.shape)
    return FactorState(W, state.V.copy())


def _conjugate_cols(
    state: FactorState,
    precision: npt.NDArray,
    info: npt.NDArray,
    shrinkage: ShrinkageState,
    delta: CompositeDiffMatrix,
    rng: RngLike,
    threads: int = 1,
) -> FactorState:
    M, T, D = state.V.shape

    def draw(j):
        prior = build_prior_precision(delta, shrinkage.rho2, shrinkage.tau2[j])
        Lambda, h = _col_system(j, state.W, precision, info, prior)
        return mvn_sample_precision(h, Lambda, _stream(rng, j)).reshape(T, D)

    V = np.array(_map(draw, range(M), threads)).reshape(state.V.shape)
    return FactorState(state.W.copy(), V)


def gaussian_weights(Y: ObservationTensor, nu2: float) -> tuple[npt.NDArray, npt.NDArray]:
    """Per-cell precision n_ijt / nu2 and information sum_r y_ijtr / nu2"""
    return Y.counts / nu2, Y.sums / nu2


def update_rows_gaussian(
    Y: ObservationTensor, state: FactorState, shrinkage: ShrinkageState, nu2: float, rng: RngLike, threads: int = 1
) -> FactorState:
    """
    Redraw every w_i from its conjugate MVN given V, sigma2 and nu2

    Rows without observations are drawn from the prior N(0, sigma2 I).
    """
    precision, info = gaussian_weights(Y, nu2)
    return _conjugate_rows(state, precision, info, shrinkage.sigma2, rng, threads)


def update_cols_gaussian(
    Y: ObservationTensor,
    state: FactorState,
    shrinkage: ShrinkageState,
    nu2: float,
    delta: CompositeDiffMatrix,
    rng: RngLike,
    threads: int = 1,
) -> FactorState:
    """Redraw every vec(V_j) from its conjugate MVN under the trend filtering prior"""
    precision, info = gaussian_weights(Y, nu2)
    return _conjugate_cols(state, precision, info, shrinkage, delta, rng, threads)


def draw_polya_gamma_weights(
    Y: ObservationTensor, trials: npt.NDArray, theta: npt.NDArray, rng: np.random.Generator
) -> tuple[npt.NDArray, npt.NDArray]:
    """
    One PG(n_ijt R_ijt, theta_ijt) draw per observed cell and the matching kappa

    The R observed replicates of a cell share theta, so their PG variables are pooled into a single draw.
    """
    b = trials * Y.counts
    active = Y.observed_cells & (b > 0)
    psi = np.zeros(theta.shape)
    if active.any():
        psi[active] = polya_gamma_sample(b[active].astype(float), theta[active], rng)
    kappa = np.where(active, Y.sums - 0.5 * b, 0.0)
    return psi, kappa


def update_binomial(
    Y: ObservationTensor,
    trials: npt.NDArray,
    state: FactorState,
    shrinkage: ShrinkageState,
    delta: CompositeDiffMatrix,
    rng: RngLike,
    threads: int = 1,
    col_rng: Optional[RngLike] = None,
) -> FactorState:
    """
    Polya-Gamma augmented update of the rows then the columns

    The latent variables are redrawn before each block so both blocks condition on current inner products.
    """
    first = _stream(_phase_streams(rng, PHASE_PG_ROWS), 0)
    second = _stream(_phase_streams(rng, PHASE_PG_COLS), 0)
    col_rng = col_rng if col_rng is not None else _phase_streams(rng, PHASE_COLS)
    psi, kappa = draw_polya_gamma_weights(Y, trials, state.inner_products(), first)
    state = _conjugate_rows(state, psi, kappa, shrinkage.sigma2, rng, threads)
    psi, kappa = draw_polya_gamma_weights(Y, trials, state.inner_products(), second)
    return _conjugate_cols(state, psi, kappa, shrinkage, delta, col_rng, threads)


def _blackbox_rows(
    Y: ObservationTensor,
    state: FactorState,
    shrinkage: ShrinkageState,
    ep: PseudoEpApprox,
    lik: BlackBoxLikelihood,
    gass: GassConfig,
    rng: RngLike,
    threads: int,
) -> tuple[FactorState, GassStats]:
    observed = Y.observed_cells
    precision, info = ep.weights(observed)
    kind = lik.constraints

    def draw(i):
        Lambda, h = _row_system(i, state.V, precision, info, shrinkage.sigma2)
        factor = GaussianFactor.from_precision(Lambda, name="row %d precision" % i)
        mu = factor.solve(h)
        j_idx, t_idx = np.nonzero(observed[i])
        design = state.V[j_idx, t_idx]
        values, mask = Y.values[i, j_idx, t_idx], Y.mask[i, j_idx, t_idx]
        cells = (np.full(j_idx.shape, i), j_idx, t_idx)

        def loglik(w):
            theta = design @ w
            return float(np.sum(lik.evaluator(values, mask, theta)) - np.sum(ep.log_density(theta, cells)))

        cons = build_constraints("row", i, state, observed, kind) if kind.active else None
        stats = GassStats()
        return gass_step(state.W[i], mu, factor, loglik, cons, gass, _stream(rng, i), stats), stats

    results = _map(draw, range(state.W.shape[0]), threads)
    stats = GassStats()
    for _, s in results:
        stats.merge(s)
    W = np.array([w for w, _ in results]).reshape(state.W.shape)
    return FactorState(W, state.V.copy()), stats


def _blackbox_cols(
    Y: ObservationTensor,
    state: FactorState,
    shrinkage: ShrinkageState,
    delta: CompositeDiffMatrix,
    ep: PseudoEpApprox,
    lik: BlackBoxLikelihood,
    gass: GassConfig,
    rng: RngLike,
    threads: int,
) -> tuple[FactorState, GassStats]:
    observed = Y.observed_cells
    precision, info = ep.weights(observed)
    kind = lik.constraints
    M, T, D = state.V.shape

    def draw(j):
        prior = build_prior_precision(delta, shrinkage.rho2, shrinkage.tau2[j])
        Lambda, h = _col_system(j, state.W, precision, info, prior)
        factor = GaussianFactor.from_precision(Lambda, name="column %d precision" % j)
        mu = factor.solve(h)
        i_idx, t_idx = np.nonzero(observed[:, j])
        rows = state.W[i_idx]
        values, mask = Y.values[i_idx, j, t_idx], Y.mask[i_idx, j, t_idx]
        cells = (i_idx, np.full(i_idx.shape, j), t_idx)

        def loglik(x):
            theta = np.einsum("nd,nd->n", rows, x.reshape(T, D)[t_idx])
            return float(np.sum(lik.evaluator(values, mask, theta)) - np.sum(ep.log_density(theta, cells)))

        cons = build_constraints("col", j, state, observed, kind) if kind.active else None
        stats = GassStats()
        x = gass_step(state.V[j].reshape(-1), mu, factor, loglik, cons, gass, _stream(rng, j), stats)
        return x.reshape(T, D), stats

    results = _map(draw, range(M), threads)
    stats = GassStats()
    for _, s in results:
        stats.merge(s)
    V = np.array([v for v, _ in results]).reshape(state.V.shape)
    return FactorState(state.W.copy(), V), stats


def gibbs_sweep_blackbox(
    Y: ObservationTensor,
    state: FactorState,
    shrinkage: ShrinkageState,
    delta: CompositeDiffMatrix,
    ep: PseudoEpApprox,
    lik: BlackBoxLikelihood,
    rng: RngLike,
    gass: Optional[GassConfig] = None,
    threads: int = 1,
    col_rng: Optional[RngLike] = None,
    stats: Optional[GassStats] = None,
) -> FactorState:
    """
    GASS update of every row then every column for a black-box likelihood

    Each block runs GASS with the Gaussian conditional obtained by treating the pseudo-EP surrogate as data and
    with log-likelihood l_true - l_pseudo, so the stationary distribution is the exact conditional.

    Parameters
    ----------
    rng: np.random.Generator or RngStreams
        stream of the row phase (and of the column phase unless col_rng is given)
    stats: GassStats, optional
        accumulates step, degenerate and fallback counts
    """
    gass = gass if gass is not None else GassConfig()
    state, row_stats = _blackbox_rows(Y, state, shrinkage, ep, lik, gass, rng, threads)
    state, col_stats = _blackbox_cols(
        Y, state, shrinkage, delta, ep, lik, gass, col_rng if col_rng is not None else _phase_streams(rng, PHASE_COLS), threads
    )
    if stats is not None:
        stats.merge(row_stats)
        stats.merge(col_stats)
    return state


def corrected_loglik(true_ll: npt.NDArray, pseudo_ll: npt.NDArray) -> npt.NDArray:
    """Log-likelihood left for GASS once the pseudo-EP surrogate has moved into the prior"""
    return np.asarray(true_ll) - np.asarray(pseudo_ll)


def update_shrinkage(
    state: FactorState,
    shrinkage: ShrinkageState,
    delta: CompositeDiffMatrix,
    rng: RngLike,
    variant: str = "derived",
) -> ShrinkageState:
    """Redraw the horseshoe+ variables of every column from the squared norms of its difference rows"""
    out = shrinkage.copy()
    for j in range(state.V.shape[0]):
        norms = np.sum(delta.apply(state.V[j]) ** 2, axis=1)
        local = horseshoe_block_update(norms, shrinkage.rho2, state.D, shrinkage.column(j), _stream(rng, j), variant)
        out.set_column(j, local)
    return out


def update_sigma2(W: npt.NDArray, rng: np.random.Generator) -> float:
    """sigma^-2 ~ Gamma(0.1 + ND/2, rate 0.1 + ||W||_F^2 / 2)"""
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise DataError("row factors must be finite")
    shape = GAMMA_PRIOR_SHAPE + W.size / 2.0
    rate = GAMMA_PRIOR_RATE + np.sum(W**2) / 2.0
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def update_nu2(residuals: npt.NDArray, rng: np.random.Generator) -> float:
    """nu^-2 ~ Gamma(0.1 + n/2, rate 0.1 + sum r^2 / 2) over the observed replicate residuals"""
    residuals = np.asarray(residuals, dtype=float).reshape(-1)
    if not np.all(np.isfinite(residuals)):
        raise DataError("residuals must be finite")
    shape = GAMMA_PRIOR_SHAPE + residuals.size / 2.0
    rate = GAMMA_PRIOR_RATE + np.sum(residuals**2) / 2.0
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def _deviance(lik: LikelihoodSpec, Y: ObservationTensor, theta: npt.NDArray, nu2: Optional[float]) -> float:
    if isinstance(lik, GaussianLikelihood) and nu2 is not None:
        return -2.0 * float(lik.cell_loglik(Y, theta, nu2=nu2).sum())
    return -2.0 * float(lik.cell_loglik(Y, theta).sum())


def compute_dic(samples: PosteriorSamples, Y: ObservationTensor, lik: LikelihoodSpec) -> float:
    """
    Deviance information criterion, mean deviance plus p_D

    p_D is the mean deviance minus the deviance at the posterior-mean curve (and posterior-mean nu2).

    Raises
    ------
    DataError
        fewer than 10 samples, or a likelihood that is not finite at the posterior-mean curve
    """
    if len(samples) < 10:
        raise DataError("DIC needs at least 10 retained samples, got %d" % len(samples))
    curves = samples.curve_samples()
    nu2 = samples.nu2 if samples.nu2 is not None else [None] * len(samples)
    deviances = np.array([_deviance(lik, Y, curves[s], nu2[s]) for s in range(len(samples))])
    mean_nu2 = None if samples.nu2 is None else float(np.mean(samples.nu2))
    at_mean = _deviance(lik, Y, curves.mean(axis=0), mean_nu2)
    if not np.isfinite(at_mean):
        bad = int(np.sum(~np.isfinite(lik.cell_loglik(Y, curves.mean(axis=0)))))
        raise DataError("likelihood is undefined at the posterior-mean curve (%d non-finite cells)" % bad)
    mean_deviance = float(np.mean(deviances))
    p_d = mean_deviance - at_mean
    return mean_deviance + p_d


class GibbsSampler:
    """
    State of one Gibbs chain, pushed forward one sweep at a time

    Parameters
    ----------
    Y: ObservationTensor
        observations, every row and column covered
    cfg: FitConfig

    Attributes
    ----------
    sweep: int
        number of completed sweeps
    state: FactorState
    shrinkage: ShrinkageState
    nu2: float, optional
        Gaussian noise variance
    ep: PseudoEpApprox
        surrogate used by the black-box path, disabled otherwise
    delta: CompositeDiffMatrix
    gass_stats: GassStats
        running GASS counters
    history_loglik, history_sigma2, history_nu2, history_degenerate: list
        per-sweep traces
    retained_W, retained_V, retained_loglik, retained_sigma2, retained_nu2: list
        snapshots kept after burn-in

    Methods
    -------
    next_step():
        Run one sweep: rows, columns, shrinkage, then the global variances
    loglik() -> float:
        Log-likelihood of the current state
    samples() -> PosteriorSamples:
        Retained snapshots once the run is complete
    """

    def __init__(self, Y: ObservationTensor, cfg: FitConfig):
        Y.check_coverage()
        cfg.likelihood.validate(Y)
        self.Y = Y
        self.cfg = cfg
        self.lik = cfg.likelihood
        N, M, T, _ = Y.dims
        self.delta = build_composite_tf_matrix(T, cfg.k)

        self.sweep = 0
        self.state = feasible_initial_state(N, M, T, cfg.D, cfg.constraints)
        self.shrinkage = ShrinkageState.initial(M, self.delta.L, cfg.rho2)
        self.nu2 = self.lik.nu2 if isinstance(self.lik, GaussianLikelihood) else None
        self.gass_stats = GassStats()

        if isinstance(self.lik, BlackBoxLikelihood) and cfg.ep_enabled:
            self.ep = init_constrained_als(
                Y, cfg.constraints, cfg.D, cfg.als_max_iters, cfg.als_tol, cfg.ep_inflation
            )
        else:
            self.ep = PseudoEpApprox.disabled((N, M, T))

        self.history_loglik: list[float] = []
        self.history_sigma2: list[float] = []
        self.history_nu2: list[float] = []
        self.history_degenerate: list[int] = []
        self.retained_W: list[npt.NDArray] = []
        self.retained_V: list[npt.NDArray] = []
        self.retained_loglik: list[float] = []
        self.retained_sigma2: list[float] = []
        self.retained_nu2: list[float] = []
        self.elapsed = 0.0

    def streams(self, phase: int) -> RngStreams:
        return RngStreams(self.cfg.seed, self.sweep, phase)

    @property
    def done(self) -> bool:
        return self.sweep >= self.cfg.sweeps

    def loglik(self) -> float:
        theta = self.state.inner_products()
        if isinstance(self.lik, GaussianLikelihood):
            return float(self.lik.cell_loglik(self.Y, theta, nu2=self.nu2).sum())
        return self.lik.total_loglik(self.Y, theta)

    def update_factors(self) -> None:
        threads = self.cfg.threads
        if isinstance(self.lik, GaussianLikelihood):
            self.state = update_rows_gaussian(
                self.Y, self.state, self.shrinkage, self.nu2, self.streams(PHASE_ROWS), threads
            )
            self.state = update_cols_gaussian(
                self.Y, self.state, self.shrinkage, self.nu2, self.delta, self.streams(PHASE_COLS), threads
            )
        elif isinstance(self.lik, BinomialLikelihood):
            self.state = update_binomial(
                self.Y,
                self.lik.trials,
                self.state,
                self.shrinkage,
                self.delta,
                self.streams(PHASE_ROWS),
                threads,
                col_rng=self.streams(PHASE_COLS),
            )
        else:
            stats = GassStats()
            self.state = gibbs_sweep_blackbox(
                self.Y,
                self.state,
                self.shrinkage,
                self.delta,
                self.ep,
                self.lik,
                self.streams(PHASE_ROWS),
                gass=self.cfg.gass,
                threads=threads,
                col_rng=self.streams(PHASE_COLS),
                stats=stats,
            )
            self.gass_stats.merge(stats)

    def update_globals(self) -> None:
        self.shrinkage = update_shrinkage(
            self.state, self.shrinkage, self.delta, self.streams(PHASE_SHRINKAGE), self.cfg.shrinkage_update
        )
        globals_rng = self.streams(PHASE_GLOBALS)
        self.shrinkage.sigma2 = update_sigma2(self.state.W, globals_rng.for_index(0))
        if self.nu2 is not None and self.cfg.sample_nu2:
            theta = self.state.inner_products()
            residuals = (self.Y.values - theta[..., None])[self.Y.mask]
            self.nu2 = update_nu2(residuals, globals_rng.for_index(1))

    def check_feasible(self) -> None:
        kind = self.cfg.constraints
        if kind.active and not check_state_feasible(self.state, self.Y.observed_cells, kind):
            raise InfeasibleStateError("state left the feasible region at sweep %d" % self.sweep)

    def refresh_pseudo_ep(self) -> None:
        """Refit the surrogate starting from the current factors"""
        self.ep = init_constrained_als(
            self.Y,
            self.cfg.constraints,
            self.cfg.D,
            self.cfg.als_max_iters,
            self.cfg.als_tol,
            self.cfg.ep_inflation,
            init=self.state,
        )

    def save_timeseries_data(self, ll: float) -> None:
        self.history_loglik.append(ll)
        self.history_sigma2.append(self.shrinkage.sigma2)
        if self.nu2 is not None:
            self.history_nu2.append(self.nu2)
        self.history_degenerate.append(self.gass_stats.degenerate)
        if is_retained(self.sweep, self.cfg.burn_in, self.cfg.thin):
            self.retained_W.append(self.state.W.copy())
            self.retained_V.append(self.state.V.copy())
            self.retained_loglik.append(ll)
            self.retained_sigma2.append(self.shrinkage.sigma2)
            if self.nu2 is not None:
                self.retained_nu2.append(self.nu2)

    def next_step(self) -> None:
        """
        Push the chain forwards one sweep: factor blocks, horseshoe+ scales, then sigma2 and nu2
        """
        start = time.time()
        if (
            self.cfg.ep_refresh_after_burn_in
            and self.ep.enabled
            and self.sweep == self.cfg.burn_in
            and self.sweep > 0
        ):
            self.refresh_pseudo_ep()

        self.update_factors()
        self.update_globals()
        if self.cfg.gass.debug:
            self.check_feasible()
        if not self.state.is_finite():
            raise DataError("factors became non-finite at sweep %d" % self.sweep)

        ll = self.loglik()
        self.save_timeseries_data(ll)
        self.elapsed += time.time() - start

        if (self.sweep + 1) % self.cfg.log_every == 0:
            logger.info(
                "sweep %d/%d",
                self.sweep + 1,
                self.cfg.sweeps,
                extra={
                    "sweep": self.sweep + 1,
                    "loglik": ll,
                    "sigma2": self.shrinkage.sigma2,
                    "nu2": self.nu2,
                    "degenerate": self.gass_stats.degenerate,
                },
            )
        self.sweep += 1

    def samples(self) -> PosteriorSamples:
        N, D = self.state.W.shape
        M, T, _ = self.state.V.shape
        S = len(self.retained_loglik)
        if S != retained_count(self.cfg.sweeps, self.cfg.burn_in, self.cfg.thin):
            raise DataError("chain stopped after %d of %d sweeps" % (self.sweep, self.cfg.sweeps))
        return PosteriorSamples(
            W=np.array(self.retained_W).reshape(S, N, D),
            V=np.array(self.retained_V).reshape(S, M, T, D),
            loglik=np.array(self.retained_loglik),
            sigma2=np.array(self.retained_sigma2),
            sweeps=self.cfg.sweeps,
            burn_in=self.cfg.burn_in,
            thin=self.cfg.thin,
            nu2=np.array(self.retained_nu2) if self.nu2 is not None else None,
            meta={
                "gass_steps": self.gass_stats.steps,
                "gass_degenerate": self.gass_stats.degenerate,
                "gass_fallbacks": self.gass_stats.fallbacks,
            },
        )


def fit(
    Y: ObservationTensor,
    cfg: FitConfig,
    sampler: Optional[GibbsSampler] = None,
    callback: Optional[Callable[[GibbsSampler], None]] = None,
) -> PosteriorSamples:
    """
    Run a full chain and return its retained samples

    Parameters
    ----------
    Y: ObservationTensor
    cfg: FitConfig
    sampler: GibbsSampler, optional
        a chain restored from a checkpoint; it continues from its sweep counter
    callback: Callable, optional
        called with the sampler after every sweep (checkpointing)

    Returns
    -------
    PosteriorSamples
        bit-identical for a fixed seed, whatever the thread count or checkpoint/resume pattern
    """
    sampler = sampler if sampler is not None else GibbsSampler(Y, cfg)
    while not sampler.done:
        sampler.next_step()
        if callback is not None:
            callback(sampler)
    return sampler.samples()
