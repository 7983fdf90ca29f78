"""Observation likelihoods
A module with the three likelihood families the Gibbs engine dispatches on (conjugate Gaussian, Polya-Gamma
binomial and black-box) plus the per-cell evaluators a black-box likelihood wraps.

An evaluator maps the replicates of n cells, their mask and the n inner products theta to the n log-densities
summed over observed replicates.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass, field
from typing import Optional, Protocol
import numpy as np
import numpy.typing as npt
from scipy.special import gammaln, log_expit
from btf.model.constraints import ConstraintKind, NONNEGATIVE, UNCONSTRAINED
from btf.model.dose_response import GammaMixture, GammaMixtureEvaluator
from btf.model.errors import ConfigError, DataError
from btf.model.tensor import ObservationTensor

LIKELIHOOD_KINDS = ("gaussian", "binomial", "poisson", "gamma_mixture", "gaussian_blackbox")


# modules
class CellEvaluator(Protocol):
    def __call__(self, values: npt.NDArray, mask: npt.NDArray, theta: npt.NDArray) -> npt.NDArray:
        ...


@dataclass(frozen=True)
class GaussianEvaluator:
    nu2: float = 1.0

    def __call__(self, values: npt.NDArray, mask: npt.NDArray, theta: npt.NDArray) -> npt.NDArray:
        resid = np.where(mask, values - np.asarray(theta)[:, None], 0.0)
        count = mask.sum(axis=1)
        return -0.5 * (resid**2).sum(axis=1) / self.nu2 - 0.5 * count * np.log(2 * np.pi * self.nu2)


@dataclass(frozen=True)
class PoissonEvaluator:
    """Counts with rate theta; -inf for a negative rate or a zero rate with positive counts"""

    def __call__(self, values: npt.NDArray, mask: npt.NDArray, theta: npt.NDArray) -> npt.NDArray:
        theta = np.asarray(theta, dtype=float)
        y = np.where(mask, values, 0.0)
        total = y.sum(axis=1)
        count = mask.sum(axis=1)
        safe = np.where(theta > 0, theta, 1.0)
        out = total * np.log(safe) - count * theta - np.where(mask, gammaln(y + 1.0), 0.0).sum(axis=1)
        out = np.where(theta > 0, out, np.where((theta == 0) & (total == 0), 0.0, -np.inf))
        return out


@dataclass(frozen=True)
class BinomialEvaluator:
    """y successes out of `trials` with success probability logistic(theta)"""

    trials: int = 1

    def __call__(self, values: npt.NDArray, mask: npt.NDArray, theta: npt.NDArray) -> npt.NDArray:
        theta = np.asarray(theta, dtype=float)[:, None]
        y = np.where(mask, values, 0.0)
        n = float(self.trials)
        log_choose = gammaln(n + 1.0) - gammaln(y + 1.0) - gammaln(n - y + 1.0)
        cell = log_choose + y * log_expit(theta) + (n - y) * log_expit(-theta)
        return np.where(mask, cell, 0.0).sum(axis=1)


def _flat_cells(tensor: ObservationTensor) -> tuple[npt.NDArray, npt.NDArray, npt.NDArray]:
    observed = tensor.observed_cells
    return observed, tensor.values[observed], tensor.mask[observed]


class LikelihoodSpec:
    """
    Base of the likelihood families

    Subclasses define `kind`, `cell_loglik` and `validate`.
    """

    kind: str = ""

    def cell_loglik(self, tensor: ObservationTensor, theta: npt.NDArray) -> npt.NDArray:
        raise NotImplementedError

    def validate(self, tensor: ObservationTensor) -> None:
        pass

    def total_loglik(self, tensor: ObservationTensor, theta: npt.NDArray) -> float:
        return float(self.cell_loglik(tensor, theta).sum())

    @property
    def constraints(self) -> ConstraintKind:
        return UNCONSTRAINED

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass
class GaussianLikelihood(LikelihoodSpec):
    """y_ijtr ~ N(<w_i, v_jt>, nu2), conjugate given the rest"""

    nu2: float = 1.0
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if not self.nu2 > 0:
            raise ConfigError("Gaussian noise variance nu2 must be positive, got %r" % self.nu2)

    def cell_loglik(self, tensor: ObservationTensor, theta: npt.NDArray, nu2: Optional[float] = None) -> npt.NDArray:
        observed, values, mask = _flat_cells(tensor)
        out = np.zeros(observed.shape)
        out[observed] = GaussianEvaluator(self.nu2 if nu2 is None else nu2)(values, mask, theta[observed])
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "nu2": self.nu2}


@dataclass
class BinomialLikelihood(LikelihoodSpec):
    """
    y_ijtr ~ Binomial(n_ijt, logistic(<w_i, v_jt>)), made conditionally Gaussian by Polya-Gamma augmentation

    Attributes
    ----------
    trials: npt.NDArray[int]
        N x M x T number of trials per replicate
    """

    trials: npt.NDArray = field(default_factory=lambda: np.ones((1, 1, 1), dtype=int))
    kind: str = field(default="binomial", init=False)

    def __post_init__(self):
        self.trials = np.asarray(self.trials)
        if np.any(self.trials < 0) or not np.all(np.equal(np.mod(self.trials, 1), 0)):
            raise DataError("binomial trials must be nonnegative integers")

    def validate(self, tensor: ObservationTensor) -> None:
        N, M, T, _ = tensor.dims
        if self.trials.shape != (N, M, T):
            self.trials = np.broadcast_to(self.trials, (N, M, T)).copy()
        y = tensor.values[tensor.mask]
        if np.any(y < 0) or not np.all(np.equal(np.mod(y, 1), 0)):
            raise DataError("binomial observations must be nonnegative integers")
        over = tensor.mask & (tensor.values > self.trials[..., None])
        if over.any():
            i, j, t, r = (int(v) for v in np.argwhere(over)[0])
            raise DataError("observation at (%d, %d, %d, %d) exceeds its %d trials" % (i, j, t, r, self.trials[i, j, t]))

    def cell_loglik(self, tensor: ObservationTensor, theta: npt.NDArray) -> npt.NDArray:
        n = np.broadcast_to(self.trials, theta.shape)[..., None].astype(float)
        y = tensor.values
        log_choose = gammaln(n + 1.0) - gammaln(y + 1.0) - gammaln(np.maximum(n - y, 0.0) + 1.0)
        cell = log_choose + y * log_expit(theta[..., None]) + (n - y) * log_expit(-theta[..., None])
        return np.where(tensor.mask, cell, 0.0).sum(axis=3)

    def to_dict(self) -> dict:
        trials = np.unique(self.trials)
        return {"kind": self.kind, "trials": int(trials[0]) if trials.size == 1 else self.trials.tolist()}


@dataclass
class BlackBoxLikelihood(LikelihoodSpec):
    """
    Any per-cell log-density, sampled by GASS under the linear constraints of `constraint_kind`

    The evaluator must be finite for every theta satisfying those constraints (strictly inside open bounds).
    """

    evaluator: CellEvaluator = field(default_factory=GaussianEvaluator)
    constraint_kind: ConstraintKind = UNCONSTRAINED
    name: str = "blackbox"
    kind: str = field(default="blackbox", init=False)

    def cell_loglik(self, tensor: ObservationTensor, theta: npt.NDArray) -> npt.NDArray:
        observed, values, mask = _flat_cells(tensor)
        out = np.zeros(observed.shape)
        out[observed] = self.evaluator(values, mask, theta[observed])
        return out

    def validate(self, tensor: ObservationTensor) -> None:
        if self.name in ("poisson", "gamma_mixture") and np.any(tensor.values[tensor.mask] < 0):
            raise DataError("%s observations must be nonnegative" % self.name)

    @property
    def constraints(self) -> ConstraintKind:
        return self.constraint_kind

    def to_dict(self) -> dict:
        out = {"kind": self.name, "constraints": self.constraint_kind.to_dict()}
        if isinstance(self.evaluator, GammaMixtureEvaluator):
            out["mixture"] = self.evaluator.mix.to_dict()
        if isinstance(self.evaluator, GaussianEvaluator):
            out["nu2"] = self.evaluator.nu2
        return out


def likelihood_from_dict(params: dict, constraints: Optional[dict] = None) -> LikelihoodSpec:
    """
    Build a likelihood from the `likelihood` section of a run configuration

    Parameters
    ----------
    params: dict
        {"kind": ..., plus "nu2" for gaussian, "trials" for binomial, "mixture" (dict or JSON path) for
        gamma_mixture}
    constraints: dict, optional
        `constraints` section; black-box kinds default to nonnegative (poisson) or [0, 1] (gamma_mixture)

    Returns
    -------
    LikelihoodSpec
    """
    if "kind" not in params:
        raise ConfigError("missing required config key 'likelihood.kind'")
    kind = params["kind"]
    if kind == "gaussian":
        return GaussianLikelihood(nu2=float(params.get("nu2", 1.0)))
    if kind == "binomial":
        if "trials" not in params:
            raise ConfigError("missing required config key 'likelihood.trials'")
        return BinomialLikelihood(trials=np.asarray(params["trials"], dtype=int))
    if kind == "poisson":
        kind_c = ConstraintKind.from_dict(constraints) if constraints else NONNEGATIVE
        return BlackBoxLikelihood(PoissonEvaluator(), kind_c, name="poisson")
    if kind == "gamma_mixture":
        if "mixture" not in params:
            raise ConfigError("missing required config key 'likelihood.mixture'")
        mix = params["mixture"]
        mix = GammaMixture.load_json(mix) if isinstance(mix, str) else GammaMixture.from_dict(mix)
        kind_c = ConstraintKind.from_dict(constraints) if constraints else ConstraintKind(0.0, 1.0, "nonincreasing")
        return BlackBoxLikelihood(GammaMixtureEvaluator(mix), kind_c, name="gamma_mixture")
    if kind == "gaussian_blackbox":
        kind_c = ConstraintKind.from_dict(constraints) if constraints else UNCONSTRAINED
        return BlackBoxLikelihood(GaussianEvaluator(float(params.get("nu2", 1.0))), kind_c, name="gaussian_blackbox")
    raise ConfigError("likelihood.kind must be one of %s, got %r" % (LIKELIHOOD_KINDS, kind))
