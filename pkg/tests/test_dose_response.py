import logging
import numpy as np
import pytest
from scipy import stats
from btf.model.dose_response import (
    GammaMixture,
    GammaMixtureEvaluator,
    PlateExperiment,
    build_dose_constraints,
    estimate_pipetting_prior,
    fixed_width_prior,
    gamma_mixture_loglik,
    load_plate_csv,
    normalize_plate,
    plates_to_tensor,
    posterior_predictive_intervals,
    write_plate_csv,
)
from btf.model.errors import ConfigError, DataError, PriorEstimationError
from btf.model.synthetic import gen_dose_response_plates
from btf.model.tensor import FactorState, PosteriorSamples

SINGLE = GammaMixture(weights=[1.0], shapes=[100.0], scales=[0.01])


def test_normalize_plate_examples() -> None:
    plate = PlateExperiment([2.0, 2.0], [[1.0, 3.0]], row=0, col=0)
    np.testing.assert_allclose(normalize_plate(plate), [[0.5, 1.5]])
    scaled = PlateExperiment([20.0, 20.0], [[10.0, 30.0]], row=0, col=0)
    np.testing.assert_allclose(normalize_plate(scaled), normalize_plate(plate))
    ones = PlateExperiment([1.0, 3.0], [[2.0, 2.0], [2.0, 2.0]], row=0, col=0)
    np.testing.assert_allclose(normalize_plate(ones), 1.0)


def test_normalize_rejects_zero_controls() -> None:
    plate = PlateExperiment([0.0, 0.0], [[1.0]], row=1, col=2, plate_id="bad")
    with pytest.raises(DataError, match="plate bad"):
        normalize_plate(plate)


def test_plate_validation() -> None:
    with pytest.raises(DataError, match="2 control"):
        PlateExperiment([1.0], [[1.0]], row=0, col=0)
    with pytest.raises(DataError, match="negative"):
        PlateExperiment([1.0, 1.0], [[-1.0]], row=0, col=0)


def test_single_component_matches_gamma_density() -> None:
    got = gamma_mixture_loglik(np.array([1.0]), 1.0, SINGLE)
    assert abs(got - stats.gamma.logpdf(1.0, a=100.0, scale=0.01)) < 1e-10


def test_replicates_add() -> None:
    mix = fixed_width_prior(0.1, 0.01, K=5)
    both = gamma_mixture_loglik(np.array([0.4, 0.6]), 0.5, mix)
    assert both == pytest.approx(gamma_mixture_loglik([0.4], 0.5, mix) + gamma_mixture_loglik([0.6], 0.5, mix), abs=1e-12)


def test_full_viability_is_most_likely_at_the_mean() -> None:
    grid = np.linspace(0.01, 1.0, 100)
    values = [gamma_mixture_loglik([1.0], theta, SINGLE) for theta in grid]
    assert int(np.argmax(values)) == len(grid) - 1


def test_loglik_outside_unit_interval() -> None:
    assert gamma_mixture_loglik([0.5], 0.0, SINGLE) == -np.inf
    assert gamma_mixture_loglik([0.5], 1.2, SINGLE) == -np.inf
    with pytest.raises(DataError, match="nonnegative"):
        gamma_mixture_loglik([-0.5], 0.5, SINGLE)


def test_loglik_continuous_in_theta() -> None:
    mix = fixed_width_prior(0.1, 0.01, K=9)
    grid = np.linspace(0.3, 1.0, 1000)
    values = np.array([gamma_mixture_loglik([0.5, 0.45], theta, mix) for theta in grid])
    assert np.all(np.isfinite(values))
    assert np.max(np.abs(np.diff(values))) < 1.0


def test_evaluator_matches_scalar_loglik() -> None:
    mix = fixed_width_prior(0.1, 0.01, K=5)
    values = np.array([[0.5, 0.6], [0.2, 9.0]])
    mask = np.array([[True, True], [True, False]])
    got = GammaMixtureEvaluator(mix)(values, mask, np.array([0.55, 1.5]))
    assert got[0] == pytest.approx(gamma_mixture_loglik([0.5, 0.6], 0.55, mix))
    assert got[1] == -np.inf


def test_mixture_validation_and_json(tmp_path) -> None:
    with pytest.raises(ConfigError, match="sum to 1"):
        GammaMixture([0.5, 0.4], [1.0, 1.0], [1.0, 1.0])
    mix = fixed_width_prior(0.1, 0.01, K=7)
    path = str(tmp_path / "mixture.json")
    mix.save_json(path)
    loaded = GammaMixture.load_json(path)
    np.testing.assert_allclose(loaded.weights, mix.weights)
    np.testing.assert_allclose(loaded.support, mix.support)


def test_fixed_width_prior_symmetry() -> None:
    mix = fixed_width_prior(0.1, 0.01, K=25)
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(mix.weights, mix.weights[::-1])
    np.testing.assert_allclose(mix.support - 1.0, -(mix.support[::-1] - 1.0), atol=1e-12)
    assert mix.mean == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        fixed_width_prior(0.1, 0.01, K=4)


def _plates_with_lowest_ratios(ratios: np.ndarray) -> list:
    return [
        PlateExperiment([0.98, 1.02], [[r, r], [0.5, 0.5]], row=n, col=0, plate_id="p%d" % n)
        for n, r in enumerate(ratios)
    ]


def test_prior_needs_ten_qualifying_plates() -> None:
    plates = _plates_with_lowest_ratios(np.array([1.1] * 9 + [0.9] * 20))
    with pytest.raises(PriorEstimationError, match="only 9 plates"):
        estimate_pipetting_prior(plates)


def test_prior_argument_checks() -> None:
    plates = _plates_with_lowest_ratios(np.full(12, 1.1))
    with pytest.raises(ConfigError, match="bins"):
        estimate_pipetting_prior(plates, bins=3)
    with pytest.raises(ConfigError, match="odd"):
        estimate_pipetting_prior(plates, K=24)


def test_prior_collapses_for_tight_ratios() -> None:
    eps = 1e-3
    mix = estimate_pipetting_prior(_plates_with_lowest_ratios(np.full(12, 1.0 + eps)))
    assert mix.support_sd < 2 * eps
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_prior_logs_raw_frequency_fallback(caplog) -> None:
    module_logger = logging.getLogger("btf.model.dose_response")
    module_logger.addHandler(caplog.handler)
    try:
        with caplog.at_level(logging.DEBUG, logger="btf.model.dose_response"):
            estimate_pipetting_prior(_plates_with_lowest_ratios(np.full(12, 1.001)))
    finally:
        module_logger.removeHandler(caplog.handler)
    fallback = [r for r in caplog.records if "raw frequencies" in r.getMessage()]
    assert len(fallback) == 1
    assert fallback[0].levelno == logging.DEBUG
    assert fallback[0].nonzero_bins == 1


def test_prior_symmetric_and_order_invariant() -> None:
    rng = np.random.default_rng(0)
    plates, _ = gen_dose_response_plates(8, 8, 4, 3, rng)
    mix = estimate_pipetting_prior(plates, K=11)
    np.testing.assert_allclose(mix.weights, mix.weights[::-1], atol=1e-12)
    shuffled = [plates[n] for n in rng.permutation(len(plates))]
    np.testing.assert_allclose(estimate_pipetting_prior(shuffled, K=11).weights, mix.weights, atol=1e-10)


@pytest.mark.slow
def test_prior_recovers_pipetting_sd() -> None:
    recovered = []
    for seed in range(5):
        plates, _ = gen_dose_response_plates(20, 20, 3, 3, np.random.default_rng(seed), pipetting_sd=0.1)
        recovered.append(estimate_pipetting_prior(plates).support_sd)
    assert sum(0.07 <= sd <= 0.13 for sd in recovered) >= 3


def test_dose_constraints_scalar() -> None:
    state = FactorState(np.array([[0.25]]), np.array([[[2.0]]]))
    cons = build_dose_constraints("row", 0, state, np.ones((1, 1, 1), dtype=bool), monotone=False)
    assert cons.satisfied(np.array([0.5]))
    assert not cons.satisfied(np.array([0.5001]))
    assert not cons.satisfied(np.array([-0.001]))


def test_dose_constraints_monotone_rows() -> None:
    state = FactorState(np.array([[0.5]]), np.array([[[1.0], [0.8], [0.4]]]))
    observed = np.ones((1, 1, 3), dtype=bool)
    plain = build_dose_constraints("row", 0, state, observed, monotone=False)
    mono = build_dose_constraints("row", 0, state, observed, monotone=True)
    assert len(mono) - len(plain) == 2


def test_predictive_intervals() -> None:
    S, N, M, T, D = 400, 1, 1, 2, 1
    samples = PosteriorSamples(
        W=np.ones((S, N, D)),
        V=np.broadcast_to(np.array([1.0, 0.5])[None, None, :, None], (S, M, T, D)).copy(),
        loglik=np.zeros(S),
        sigma2=np.ones(S),
        sweeps=S,
        burn_in=0,
        thin=1,
    )
    lower, upper = posterior_predictive_intervals(samples, SINGLE, 0.5, np.random.default_rng(0))
    assert lower.shape == (N, M, T)
    # single tight gamma component: the interval is that gamma's central quantile range
    expected = stats.gamma.ppf([0.25, 0.75], a=100.0, scale=0.01)
    np.testing.assert_allclose([lower[0, 0, 0], upper[0, 0, 0]], expected, atol=0.02)
    assert np.all(upper[0, 0, 1] < upper[0, 0, 0])
    with pytest.raises(ConfigError, match="level"):
        posterior_predictive_intervals(samples, SINGLE, 1.0, np.random.default_rng(0))


def test_plate_csv_round_trip(tmp_path) -> None:
    plates, _ = gen_dose_response_plates(2, 3, 4, 2, np.random.default_rng(1))
    path = str(tmp_path / "plates.csv")
    write_plate_csv(plates, path)
    loaded = load_plate_csv(path)
    assert len(loaded) == 6
    Y, Z = plates_to_tensor(plates), plates_to_tensor(loaded)
    assert Z.dims == (2, 3, 4, 2)
    np.testing.assert_allclose(Z.values, Y.values)


def test_plates_to_tensor_rejects_duplicates() -> None:
    plate = PlateExperiment([1.0, 1.0], [[0.5]], row=0, col=0)
    with pytest.raises(DataError, match="more than one plate"):
        plates_to_tensor([plate, plate])
    with pytest.raises(DataError, match="no plates"):
        plates_to_tensor([])
