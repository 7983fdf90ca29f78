import numpy as np
import pytest
from btf.model.constraints import UNCONSTRAINED, UNIT_INTERVAL, ConstraintKind, check_state_feasible
from btf.model.errors import DataError
from btf.model.gibbs import corrected_loglik
from btf.model.pseudo_ep import (
    PSEUDO_VAR_FLOOR,
    PseudoEpApprox,
    feasible_initial_state,
    init_constrained_als,
    interior_value,
)
from btf.model.tensor import ObservationTensor


def _tensor(theta: np.ndarray) -> ObservationTensor:
    return ObservationTensor(theta[..., None], np.ones(theta.shape + (1,), dtype=bool))


def test_rank_one_recovered_exactly() -> None:
    rng = np.random.default_rng(0)
    a = rng.uniform(0.5, 2.0, size=3)
    b = rng.uniform(0.5, 2.0, size=(2, 4))
    theta = a[:, None, None] * b[None]
    ep = init_constrained_als(_tensor(theta), UNCONSTRAINED, D=1)
    np.testing.assert_allclose(ep.pseudo_obs, theta, atol=1e-6)
    np.testing.assert_allclose(ep.pseudo_var, PSEUDO_VAR_FLOOR)


def test_pseudo_obs_clipped_to_unit_interval() -> None:
    theta = np.full((3, 2, 3), 1.5)
    theta[0] = 0.5
    ep = init_constrained_als(_tensor(theta), UNIT_INTERVAL, D=1)
    assert ep.pseudo_obs.min() >= 0.0
    assert ep.pseudo_obs.max() <= 1.0
    # rows 1 and 2 cannot reach 1.5, so their residual variance stays above the floor
    assert np.all(ep.pseudo_var[1:] > PSEUDO_VAR_FLOOR)


def test_monotone_pseudo_curves() -> None:
    rng = np.random.default_rng(1)
    curves = np.exp(-np.cumsum(rng.uniform(0.0, 0.5, size=(4, 3, 6)), axis=2))
    noisy = np.clip(curves + rng.normal(scale=0.05, size=curves.shape), 0.0, None)
    kind = ConstraintKind(lower=0.0, upper=1.0, monotone="nonincreasing")
    ep = init_constrained_als(_tensor(noisy), kind, D=2, max_iters=10)
    assert np.all(np.diff(ep.pseudo_obs, axis=2) <= 1e-12)
    assert ep.pseudo_obs.min() >= 0.0 and ep.pseudo_obs.max() <= 1.0
    assert ep.iterations >= 1


def test_correction_identity() -> None:
    rng = np.random.default_rng(2)
    ep = PseudoEpApprox(rng.normal(size=(2, 2, 3)), rng.uniform(0.1, 1.0, size=(2, 2, 3)))
    cells = (np.array([0, 1, 1]), np.array([0, 0, 1]), np.array([2, 1, 0]))
    theta = rng.normal(size=3)
    true_ll = rng.normal(size=3) * 10
    pseudo = ep.log_density(theta, cells)
    assert np.max(np.abs(corrected_loglik(true_ll, pseudo) + pseudo - true_ll)) < 1e-10


def test_disabled_contributes_nothing() -> None:
    ep = PseudoEpApprox.disabled((2, 2, 2))
    precision, info = ep.weights(np.ones((2, 2, 2), dtype=bool))
    assert not precision.any() and not info.any()
    np.testing.assert_array_equal(ep.log_density(np.ones(3), (np.zeros(3, int),) * 3), 0.0)


def test_weights_only_on_observed_cells() -> None:
    ep = PseudoEpApprox(np.full((1, 1, 2), 3.0), np.full((1, 1, 2), 0.5))
    precision, info = ep.weights(np.array([[[True, False]]]))
    np.testing.assert_allclose(precision, [[[2.0, 0.0]]])
    np.testing.assert_allclose(info, [[[6.0, 0.0]]])


def test_invalid_variances_rejected() -> None:
    with pytest.raises(DataError, match="strictly positive"):
        PseudoEpApprox(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)))


@pytest.mark.parametrize(
    "kind, value",
    [(UNCONSTRAINED, 0.0), (UNIT_INTERVAL, 0.5), (ConstraintKind(lower=0.0), 1.0), (ConstraintKind(upper=2.0), 1.0)],
)
def test_initial_state_is_interior(kind: ConstraintKind, value: float) -> None:
    assert interior_value(kind) == value
    state = feasible_initial_state(2, 3, 4, 3, kind)
    np.testing.assert_allclose(state.inner_products(), value)
    assert check_state_feasible(state, np.ones((2, 3, 4), dtype=bool), kind)


def test_empty_tensor_rejected() -> None:
    Y = ObservationTensor(np.zeros((1, 1, 2, 1)), np.zeros((1, 1, 2, 1), dtype=bool))
    with pytest.raises(DataError, match="without observations"):
        init_constrained_als(Y, UNCONSTRAINED, D=1)
