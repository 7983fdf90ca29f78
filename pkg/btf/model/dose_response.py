"""Empirical-Bayes dose-response layer
A module that turns raw microwell plate measurements into a normalized observation tensor, estimates the
pipetting-error prior as a discrete gamma mixture, and evaluates the resulting heteroskedastic likelihood of
viability curves bounded in [0, 1].

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass
import json
import logging
from typing import Optional
import numpy as np
import numpy.typing as npt
import pandas as pd
import statsmodels.api as sm
from scipy.special import logsumexp
from scipy.stats import gamma as gamma_dist
from btf.model.constraints import ConstraintKind, ConstraintSet, build_constraints
from btf.model.errors import ConfigError, ConvergenceError, DataError, PriorEstimationError
from btf.model.tensor import FactorState, ObservationTensor, PosteriorSamples

logger = logging.getLogger(__name__)

PLATE_COLUMNS = ["plate_id", "row", "col", "dose_index", "replicate", "value", "is_control"]
MIN_QUALIFYING_PLATES = 10
IRLS_MAX_ITERS = 100
# zero counts would put every gamma component at -inf
ZERO_FLOOR = 1e-3


# modules
@dataclass
class PlateExperiment:
    """
    One (row, column) pair measured on a plate

    Attributes
    ----------
    control_values: npt.NDArray
        untreated control replicates, at least 2
    dose_values: npt.NDArray
        T x R raw population measurements, lowest concentration first
    row, col: int
        cell line and drug index of the pair
    plate_id: str
    """

    control_values: npt.NDArray
    dose_values: npt.NDArray
    row: int
    col: int
    plate_id: str = ""

    def __post_init__(self):
        self.control_values = np.asarray(self.control_values, dtype=float).reshape(-1)
        self.dose_values = np.atleast_2d(np.asarray(self.dose_values, dtype=float))
        if self.control_values.size < 2:
            raise DataError("plate %s needs at least 2 control replicates" % self.plate_id)
        if np.any(self.control_values < 0) or np.any(self.dose_values < 0):
            raise DataError("plate %s has negative measurements" % self.plate_id)

    @property
    def control_mean(self) -> float:
        return float(self.control_values.mean())


def normalize_plate(p: PlateExperiment) -> npt.NDArray:
    """Divide every dose measurement by the plate's control mean"""
    if not p.control_mean > 0:
        raise DataError("plate %s (row %d, col %d) has a nonpositive control mean" % (p.plate_id, p.row, p.col))
    return p.dose_values / p.control_mean


@dataclass
class GammaMixture:
    """
    Discrete mixture over pipetting multipliers mu_k with gamma replicate noise

    Component k has shape a_k and scale base b_k, so at viability theta it is Ga(shape a_k, scale b_k theta) with
    mean mu_k theta and variance sigma2 theta^2.
    """

    weights: npt.NDArray
    shapes: npt.NDArray
    scales: npt.NDArray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.shapes = np.asarray(self.shapes, dtype=float).reshape(-1)
        self.scales = np.asarray(self.scales, dtype=float).reshape(-1)
        if not (self.weights.shape == self.shapes.shape == self.scales.shape):
            raise ConfigError("mixture weights, shapes and scales must have equal length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ConfigError("mixture weights must be nonnegative and sum to 1")
        if np.any(self.shapes <= 0) or np.any(self.scales <= 0):
            raise ConfigError("mixture shapes and scales must be positive")

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def support(self) -> npt.NDArray:
        """Component means mu_k at full viability"""
        return self.shapes * self.scales

    @property
    def mean(self) -> float:
        return float(self.weights @ self.support)

    @property
    def support_sd(self) -> float:
        """Spread of the pipetting multipliers, excluding within-component noise"""
        return float(np.sqrt(self.weights @ (self.support - self.mean) ** 2))

    def sample(self, theta: npt.NDArray, rng: np.random.Generator) -> npt.NDArray:
        """One replicate per entry of theta; zero where theta <= 0"""
        theta = np.asarray(theta, dtype=float)
        k = rng.choice(self.K, size=theta.shape, p=self.weights)
        return rng.gamma(self.shapes[k], self.scales[k] * np.maximum(theta, 0.0))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "shapes": self.shapes.tolist(), "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, params: dict) -> "GammaMixture":
        weights = np.asarray(params["weights"], dtype=float)
        return cls(weights / weights.sum(), params["shapes"], params["scales"])

    def save_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=4)

    @classmethod
    def load_json(cls, path: str) -> "GammaMixture":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _symmetric_support(half_width: float, K: int) -> npt.NDArray:
    """K points on [1 - half_width, 1 + half_width], mirrored exactly about 1"""
    offsets = half_width * np.linspace(0.0, 1.0, (K + 1) // 2)
    return 1.0 + np.concatenate([-offsets[:0:-1], offsets])


def _mixture_from_support(support: npt.NDArray, density: npt.NDArray, sigma2: float) -> GammaMixture:
    weights = np.clip(density, 0.0, None)
    if not weights.sum() > 0:
        weights = np.ones_like(support)
    weights = weights / weights.sum()
    return GammaMixture(weights=weights, shapes=support**2 / sigma2, scales=sigma2 / support)


def pooled_control_variance(plates: list[PlateExperiment]) -> float:
    """Within-plate variance of control replicates after normalization, pooled across plates"""
    ss, dof = 0.0, 0
    for p in plates:
        normalized = p.control_values / p.control_mean
        ss += float(np.sum((normalized - normalized.mean()) ** 2))
        dof += normalized.size - 1
    return ss / dof


def fixed_width_prior(sd: float, sigma2: float, K: int = 25) -> GammaMixture:
    """
    Gaussian-shaped mixture of fixed width around 1, for screens with too few plates to estimate one

    Parameters
    ----------
    sd: float
        spread of the pipetting multipliers
    sigma2: float
        within-component replicate variance at full viability
    K: int
        odd number of support points
    """
    if K % 2 == 0 or sd <= 0 or sigma2 <= 0:
        raise ConfigError("fixed_width_prior needs odd K and positive sd and sigma2")
    half = min(3 * sd, 0.95)
    support = _symmetric_support(half, K)
    return _mixture_from_support(support, np.exp(-0.5 * ((support - 1.0) / sd) ** 2), sigma2)


def _smoothed_density(ratios: npt.NDArray, bins: int, at: npt.NDArray) -> npt.NDArray:
    """Poisson-GLM smoothed histogram of the ratios evaluated at `at`"""
    counts, edges = np.histogram(ratios, bins=bins, range=(1.0, float(ratios.max())))
    centers = 0.5 * (edges[:-1] + edges[1:])
    if np.count_nonzero(counts) < 4:
        # too few bins for 4 coefficients: raw frequencies
        logger.debug(
            "only %d nonzero bins, using raw frequencies instead of the Poisson GLM",
            np.count_nonzero(counts),
            extra={"nonzero_bins": int(np.count_nonzero(counts)), "bins": bins},
        )
        idx = np.clip(np.digitize(at, edges) - 1, 0, bins - 1)
        inside = (at >= edges[0]) & (at <= edges[-1])
        return np.where(inside, counts[idx] / counts.sum(), 0.0)

    loc, spread = centers.mean(), centers.std()
    design = np.vander((centers - loc) / spread, 4, increasing=True)
    model = sm.GLM(counts, design, family=sm.families.Poisson())
    result = model.fit(maxiter=IRLS_MAX_ITERS)
    if not result.converged:
        raise ConvergenceError("Poisson GLM did not converge in %d IRLS iterations" % IRLS_MAX_ITERS)
    logger.debug("Poisson GLM coefficients %s", result.params)
    return result.predict(np.vander((at - loc) / spread, 4, increasing=True))


def estimate_pipetting_prior(plates: list[PlateExperiment], bins: int = 20, K: int = 25) -> GammaMixture:
    """
    Estimate the pipetting-error gamma mixture from lowest-concentration measurements

    Parameters
    ----------
    plates: list[PlateExperiment]
        at least 10 must have a lowest-dose mean above their control mean
    bins: int
        equal-width histogram bins over the qualifying ratios, at least 5
    K: int
        odd number of support points of the symmetrized density

    Returns
    -------
    GammaMixture
        weights symmetric about the centre component at 1

    Raises
    ------
    PriorEstimationError
        fewer than 10 qualifying plates; use `fixed_width_prior` instead
    ConvergenceError
        the Poisson GLM did not converge
    """
    if bins < 5:
        raise ConfigError("need at least 5 histogram bins, got %d" % bins)
    if K < 1 or K % 2 == 0:
        raise ConfigError("K must be odd, got %d" % K)

    ratios = np.array([normalize_plate(p)[0].mean() for p in plates])
    qualifying = np.sort(ratios[ratios > 1.0])
    if qualifying.size < MIN_QUALIFYING_PLATES:
        raise PriorEstimationError(
            "only %d plates have a lowest-dose mean above the control mean (need %d); "
            "fall back to fixed_width_prior" % (qualifying.size, MIN_QUALIFYING_PLATES)
        )

    half_width = min(float(qualifying.max()) - 1.0, 0.95)
    support = _symmetric_support(half_width, K)
    density = _smoothed_density(qualifying, bins, 1.0 + np.abs(support - 1.0))
    sigma2 = pooled_control_variance(plates)
    if not sigma2 > 0:
        raise PriorEstimationError("control replicates show no variation")

    mix = _mixture_from_support(support, density, sigma2)
    logger.info(
        "pipetting prior from %d qualifying plates",
        qualifying.size,
        extra={"support_sd": mix.support_sd, "sigma2": sigma2, "K": K},
    )
    return mix


def _mixture_cell_logpdf(y: npt.NDArray, theta: npt.NDArray, mix: GammaMixture) -> npt.NDArray:
    """log sum_k m_k Ga(y; a_k, b_k theta) for y (n,R) and positive theta (n,)"""
    y = np.maximum(y, ZERO_FLOOR)
    comp = gamma_dist.logpdf(
        y[..., None], mix.shapes, scale=mix.scales * theta[:, None, None]
    ) + np.log(np.where(mix.weights > 0, mix.weights, np.finfo(float).tiny))
    return logsumexp(comp, axis=-1)


def gamma_mixture_loglik(y: npt.NDArray, theta: float, mix: GammaMixture) -> float:
    """
    Log-likelihood of the replicates of one cell at viability theta

    Returns -inf when theta is outside (0, 1].
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if np.any(y < 0):
        raise DataError("dose-response observations must be nonnegative")
    if not (0.0 < theta <= 1.0):
        return -np.inf
    return float(_mixture_cell_logpdf(y[None, :], np.array([float(theta)]), mix).sum())


@dataclass(frozen=True)
class GammaMixtureEvaluator:
    """Cell evaluator of the gamma-mixture likelihood for the black-box sampler"""

    mix: GammaMixture

    def __call__(self, values: npt.NDArray, mask: npt.NDArray, theta: npt.NDArray) -> npt.NDArray:
        theta = np.asarray(theta, dtype=float)
        valid = (theta > 0) & (theta <= 1)
        out = np.full(theta.shape, -np.inf)
        if np.any(valid):
            cell = _mixture_cell_logpdf(values[valid], theta[valid], self.mix)
            out[valid] = np.where(mask[valid], cell, 0.0).sum(axis=1)
        return out


def build_dose_constraints(
    context: str, index: int, state: FactorState, observed: npt.NDArray, monotone: bool = True
) -> ConstraintSet:
    """0 <= <w_i, v_jt> <= 1 on every observed cell, plus nonincreasing curves when `monotone`"""
    kind = ConstraintKind(lower=0.0, upper=1.0, monotone="nonincreasing" if monotone else None)
    return build_constraints(context, index, state, observed, kind)


def posterior_predictive_intervals(
    samples: PosteriorSamples, mix: GammaMixture, level: float, rng: np.random.Generator
) -> tuple[npt.NDArray, npt.NDArray]:
    """
    Central predictive intervals of a future replicate for every (i, j, t)

    One replicate is drawn from the mixture per retained sample at theta = <w_i, v_jt>.

    Returns
    -------
    tuple[npt.NDArray, npt.NDArray]
        lower and upper N x M x T quantiles at (1 - level)/2 and (1 + level)/2
    """
    if not 0.0 < level < 1.0:
        raise ConfigError("level must be in (0, 1), got %r" % level)
    draws = mix.sample(samples.curve_samples(), rng)
    alpha = 1.0 - level
    lower, upper = np.quantile(draws, [alpha / 2, 1 - alpha / 2], axis=0)
    return lower, upper


def load_plate_csv(path: str) -> list[PlateExperiment]:
    """
    Read `plate_id,row,col,dose_index,replicate,value,is_control` rows into plate experiments

    Dose and replicate counts are taken from the file, so 9x6 and 7x2 protocols load alike.
    """
    frame = pd.read_csv(path)
    missing = [c for c in PLATE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError("%s is missing columns %s" % (path, missing))
    frame["is_control"] = frame["is_control"].astype(bool)

    plates = []
    for (plate_id, row, col), group in frame.groupby(["plate_id", "row", "col"], sort=True):
        controls = group.loc[group["is_control"], "value"].to_numpy(dtype=float)
        doses = group.loc[~group["is_control"]]
        grid = doses.pivot(index="dose_index", columns="replicate", values="value").sort_index()
        if grid.isna().any().any():
            raise DataError("plate %s has an incomplete dose x replicate grid" % plate_id)
        plates.append(PlateExperiment(controls, grid.to_numpy(dtype=float), int(row), int(col), str(plate_id)))
    return plates


def write_plate_csv(plates: list[PlateExperiment], path: str) -> None:
    records = []
    for p in plates:
        for r, value in enumerate(p.control_values):
            records.append((p.plate_id, p.row, p.col, None, r, value, True))
        for t, r in np.ndindex(p.dose_values.shape):
            records.append((p.plate_id, p.row, p.col, t, r, p.dose_values[t, r], False))
    frame = pd.DataFrame(records, columns=PLATE_COLUMNS)
    frame["dose_index"] = frame["dose_index"].astype("Int64")
    frame.to_csv(path, index=False, float_format="%.17g")


def plates_to_tensor(plates: list[PlateExperiment], dims: Optional[tuple[int, int]] = None) -> ObservationTensor:
    """
    Normalized N x M x T x R tensor; pairs without a plate stay unobserved

    Raises
    ------
    DataError
        two plates for the same pair or plates with different grid shapes
    """
    if not plates:
        raise DataError("no plates given")
    T, R = plates[0].dose_values.shape
    N = dims[0] if dims else max(p.row for p in plates) + 1
    M = dims[1] if dims else max(p.col for p in plates) + 1
    values = np.zeros((N, M, T, R))
    mask = np.zeros((N, M, T, R), dtype=bool)
    for p in plates:
        if p.dose_values.shape != (T, R):
            raise DataError("plate %s has a %s grid, expected %s" % (p.plate_id, p.dose_values.shape, (T, R)))
        if mask[p.row, p.col].any():
            raise DataError("more than one plate for pair (%d, %d)" % (p.row, p.col))
        values[p.row, p.col] = normalize_plate(p)
        mask[p.row, p.col] = True
    return ObservationTensor(values, mask)
