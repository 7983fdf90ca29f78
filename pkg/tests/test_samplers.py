import itertools
import numpy as np
import pytest
from scipy import sparse, stats
from btf.model.constraints import box_monotone_constraints
from btf.model.errors import ConfigError, DataError, InfeasibleStateError
from btf.model.samplers import (
    GassConfig,
    GassStats,
    constraint_intervals,
    ess_step,
    gass_step,
    horseshoe_block_update,
    horseshoe_conditional_params,
    mvn_sample_precision,
    pav_monotone_projection,
    polya_gamma_mean,
    polya_gamma_sample,
    polya_gamma_var,
    sample_horseshoe_prior,
)
from btf.model.tensor import LocalShrinkage


def flat(x: np.ndarray) -> float:
    return 0.0


# angle intervals
def test_cosine_interval() -> None:
    region = constraint_intervals(1.0, 0.0, 0.0)
    assert len(region.intervals) == 1
    lo, hi = region.intervals[0]
    assert lo == pytest.approx(-np.pi / 2)
    assert hi == pytest.approx(np.pi / 2)


def test_whole_ellipse_valid() -> None:
    region = constraint_intervals(0.5, 0.5, -2.0)
    assert region.measure == pytest.approx(2 * np.pi)


def test_constraint_violated_everywhere() -> None:
    assert constraint_intervals(0.5, 0.5, 2.0).is_empty


def test_intervals_match_brute_force_grid() -> None:
    rng = np.random.default_rng(0)
    theta = np.linspace(-np.pi, np.pi, 10_000)
    for a, b, c in rng.normal(scale=2.0, size=(1000, 3)):
        region = constraint_intervals(a, b, c)
        value = a * np.cos(theta) + b * np.sin(theta) - c
        # grid points on the boundary are ambiguous up to rounding
        clear = np.abs(value) > 1e-9
        np.testing.assert_array_equal(region.contains(theta)[clear], (value >= 0)[clear])


def test_grid_size_floor() -> None:
    with pytest.raises(ConfigError, match="at least 16"):
        GassConfig(grid_size=8)
    assert GassConfig.from_dict({"grid_size": 64}).grid_size == 64


# GASS and ESS
def test_gass_output_stays_feasible() -> None:
    rng = np.random.default_rng(1)
    cons = box_monotone_constraints(3, 0.1, 1.0, "nonincreasing")
    x = np.array([0.9, 0.5, 0.2])
    mu = np.full(3, 0.5)
    sigma = 0.05 * np.eye(3) + 0.01
    stats_ = GassStats()

    def loglik(z: np.ndarray) -> float:
        return float(-0.5 * np.sum((z - 0.4) ** 2) / 0.1)

    for _ in range(500):
        x = gass_step(x, mu, sigma, loglik, cons, GassConfig(grid_size=64), rng, stats_)
        assert cons.satisfied(x)
    assert stats_.steps == 500


def test_gass_rejects_infeasible_start() -> None:
    cons = box_monotone_constraints(1, 0.0, None, None)
    rng = np.random.default_rng(2)
    with pytest.raises(InfeasibleStateError):
        gass_step(np.array([-1.0]), np.zeros(1), np.eye(1), flat, cons, GassConfig(), rng)
    with pytest.raises(InfeasibleStateError, match="not finite"):
        gass_step(np.array([1.0]), np.zeros(1), np.eye(1), lambda z: -np.inf, cons, GassConfig(), rng)


def test_gass_reproduces_unconstrained_prior() -> None:
    rng = np.random.default_rng(3)
    mu = np.array([1.0, -1.0])
    sigma = np.array([[1.0, 0.5], [0.5, 2.0]])
    x = mu.copy()
    draws = []
    for _ in range(20_000):
        x = gass_step(x, mu, sigma, flat, None, GassConfig(grid_size=64), rng)
        draws.append(x)
    draws = np.array(draws)
    np.testing.assert_allclose(draws.mean(axis=0), mu, atol=0.1)
    np.testing.assert_allclose(np.cov(draws.T), sigma, atol=0.15)


def test_gass_truncated_normal_moments() -> None:
    rng = np.random.default_rng(4)
    cons = box_monotone_constraints(1, 0.0, None, None)
    x = np.array([0.5])
    draws = []
    for _ in range(10_000):
        x = gass_step(x, np.zeros(1), np.eye(1), flat, cons, GassConfig(), rng)
        draws.append(x[0])
    draws = np.array(draws)
    assert draws.min() >= 0.0
    assert draws.mean() == pytest.approx(np.sqrt(2 / np.pi), abs=0.05)
    assert draws.var() == pytest.approx(1 - 2 / np.pi, abs=0.05)


@pytest.mark.slow
def test_gass_matches_half_normal() -> None:
    rng = np.random.default_rng(5)
    cons = box_monotone_constraints(1, 0.0, None, None)
    x = np.array([0.5])
    draws = []
    for step in range(100_000):
        x = gass_step(x, np.zeros(1), np.eye(1), flat, cons, GassConfig(), rng)
        if step % 10 == 0:
            draws.append(x[0])
    assert stats.kstest(draws, stats.halfnorm.cdf, alternative="two-sided").pvalue > 0.01


def test_ess_conjugate_normal() -> None:
    rng = np.random.default_rng(6)

    def loglik(z: np.ndarray) -> float:
        return float(-0.5 * (1.0 - z[0]) ** 2)

    x = np.zeros(1)
    draws = []
    for _ in range(20_000):
        x = ess_step(x, np.zeros(1), np.eye(1), loglik, rng)
        draws.append(x[0])
    draws = np.array(draws[1000:])
    assert draws.mean() == pytest.approx(0.5, abs=0.05)
    assert draws.var() == pytest.approx(0.5, abs=0.05)


def test_ess_rejects_non_finite_start() -> None:
    with pytest.raises(InfeasibleStateError):
        ess_step(np.zeros(1), np.zeros(1), np.eye(1), lambda z: np.nan, np.random.default_rng(0))


# Polya-Gamma
@pytest.mark.parametrize("b, c", [(1.0, 0.0), (2.0, 3.0), (5.0, 1.0), (200.0, 0.5)])
def test_polya_gamma_mean(b: float, c: float) -> None:
    rng = np.random.default_rng(7)
    n = 20_000
    draws = polya_gamma_sample(np.full(n, b), np.full(n, c), rng)
    assert np.all(draws > 0)
    se = np.sqrt(polya_gamma_var(b, c) / n)
    assert abs(draws.mean() - polya_gamma_mean(b, c)) < 4 * se


def test_polya_gamma_known_values() -> None:
    assert polya_gamma_mean(1.0, 0.0) == pytest.approx(0.25)
    assert polya_gamma_mean(2.0, 3.0) == pytest.approx(np.tanh(1.5) / 3)
    # series representation: PG(1, 0) = sum_k g_k / (2 pi^2 (k - 1/2)^2), g_k ~ Exp(1)
    k = np.arange(1, 201)
    series_var = np.sum(1.0 / (2 * np.pi**2 * (k - 0.5) ** 2) ** 2)
    assert polya_gamma_var(1.0, 0.0) == pytest.approx(series_var, rel=0.01)


def test_polya_gamma_mean_decreases_with_tilt() -> None:
    rng = np.random.default_rng(8)
    means = [polya_gamma_sample(np.ones(20_000), np.full(20_000, c), rng).mean() for c in (0.0, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_polya_gamma_scalar_and_bad_shape() -> None:
    rng = np.random.default_rng(9)
    assert isinstance(polya_gamma_sample(1.0, 0.5, rng), float)
    with pytest.raises(DataError, match="strictly positive"):
        polya_gamma_sample(0.0, 1.0, rng)


# horseshoe+
def test_horseshoe_conditional_arithmetic() -> None:
    shape, rate = horseshoe_conditional_params(np.array([2.0]), 1.0, 3, np.array([1.0]))
    assert shape == 2.0
    np.testing.assert_allclose(rate, [2.0])
    shape, rate = horseshoe_conditional_params(np.array([2.0]), 1.0, 3, np.array([1.0]), "paper_literal")
    assert shape == 4.0
    np.testing.assert_allclose(rate, [2.0])
    with pytest.raises(ConfigError):
        horseshoe_conditional_params(np.array([2.0]), 1.0, 3, np.array([1.0]), "other")


def test_horseshoe_degenerate_input_stays_positive() -> None:
    rng = np.random.default_rng(10)
    local = LocalShrinkage(tau2=np.ones(4), c=np.full(4, 1e12), phi=np.ones(4), eta=np.ones(4))
    for _ in range(100):
        local = horseshoe_block_update(np.zeros(4), 0.01, 3, local, rng)
        for name in ("tau2", "c", "phi", "eta"):
            value = getattr(local, name)
            assert np.all(np.isfinite(value)) and np.all(value > 0)


def test_horseshoe_rejects_bad_input() -> None:
    local = LocalShrinkage(tau2=np.ones(2), c=np.ones(2), phi=np.ones(2), eta=np.ones(2))
    rng = np.random.default_rng(11)
    with pytest.raises(DataError):
        horseshoe_block_update(np.array([-1.0, 1.0]), 1.0, 2, local, rng)
    with pytest.raises(DataError, match="phi"):
        horseshoe_block_update(np.ones(2), 1.0, 2, LocalShrinkage(np.ones(2), np.ones(2), np.zeros(2), np.ones(2)), rng)


def test_horseshoe_prior_shapes() -> None:
    local = sample_horseshoe_prior((3, 5), np.random.default_rng(12))
    assert local.tau2.shape == (3, 5)
    assert np.all(local.tau2 > 0)


@pytest.mark.slow
def test_horseshoe_geweke() -> None:
    # alternate differences | tau2 and shrinkage | differences from a prior draw; tau2 must keep its prior law
    rng = np.random.default_rng(13)
    D, rounds, chains = 2, 200, 500
    forward = sample_horseshoe_prior((chains,), rng)
    local = sample_horseshoe_prior((chains,), rng)
    for _ in range(rounds):
        diffs = rng.normal(size=(chains, D)) * np.sqrt(local.tau2)[:, None]
        local = horseshoe_block_update(np.sum(diffs**2, axis=1), 1.0, D, local, rng)
    result = stats.ks_2samp(np.log(forward.tau2), np.log(local.tau2))
    assert result.pvalue > 0.01


# Gaussian draws from a precision
@pytest.mark.parametrize("as_sparse", [False, True])
def test_mvn_sample_precision_mean(as_sparse: bool) -> None:
    rng = np.random.default_rng(14)
    precision = np.array([[2.0, -1.0], [-1.0, 1.0]])
    lam = sparse.csr_matrix(precision) if as_sparse else precision
    draws = np.array([mvn_sample_precision(np.array([1.0, 0.0]), lam, rng) for _ in range(5000)])
    np.testing.assert_allclose(draws.mean(axis=0), [1.0, 1.0], atol=0.08)
    np.testing.assert_allclose(np.cov(draws.T), np.linalg.inv(precision), atol=0.15)


def test_mvn_sample_precision_is_deterministic_and_banded() -> None:
    n = 10_000
    tridiagonal = sparse.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    first = mvn_sample_precision(np.zeros(n), tridiagonal, np.random.default_rng(15))
    second = mvn_sample_precision(np.zeros(n), tridiagonal, np.random.default_rng(15))
    np.testing.assert_array_equal(first, second)
    assert first.shape == (n,)


def test_mvn_sample_precision_reports_bad_matrix() -> None:
    from btf.model.errors import CholeskyError

    with pytest.raises(CholeskyError, match="precision"):
        mvn_sample_precision(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), np.random.default_rng(0))


# PAV
@pytest.mark.parametrize(
    "y, direction, expected",
    [([3, 2, 1], "nonincreasing", [3, 2, 1]), ([1, 3, 2], "nondecreasing", [1, 2.5, 2.5])],
)
def test_pav_examples(y: list, direction: str, expected: list) -> None:
    np.testing.assert_allclose(pav_monotone_projection(np.array(y, dtype=float), direction), expected)


def _brute_force_isotonic(y: np.ndarray) -> np.ndarray:
    best, best_loss = None, np.inf
    n = len(y)
    for cuts in itertools.product([False, True], repeat=n - 1):
        edges = [0] + [i + 1 for i, cut in enumerate(cuts) if cut] + [n]
        fit = np.concatenate([np.full(hi - lo, y[lo:hi].mean()) for lo, hi in zip(edges, edges[1:])])
        if np.all(np.diff(fit) >= -1e-12):
            loss = np.sum((fit - y) ** 2)
            if loss < best_loss:
                best, best_loss = fit, loss
    return best


def test_pav_matches_brute_force() -> None:
    rng = np.random.default_rng(16)
    for _ in range(50):
        y = rng.normal(size=8)
        fit = pav_monotone_projection(y, "nondecreasing")
        assert np.max(np.abs(fit - _brute_force_isotonic(y))) < 1e-9
        np.testing.assert_allclose(pav_monotone_projection(fit, "nondecreasing"), fit)


def test_pav_rejects_bad_input() -> None:
    with pytest.raises(DataError, match="empty"):
        pav_monotone_projection(np.array([]))
    with pytest.raises(ConfigError, match="direction"):
        pav_monotone_projection(np.ones(3), "sideways")
