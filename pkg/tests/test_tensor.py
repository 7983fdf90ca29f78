import numpy as np
import pytest
from btf.model.errors import DataError
from btf.model.tensor import (
    FactorState,
    ObservationTensor,
    PosteriorSamples,
    ShrinkageState,
    inner_curve,
    is_retained,
    read_long_csv,
    retained_count,
    tensor_from_long_format,
    write_long_csv,
)


def test_long_format_sets_mask_and_dims() -> None:
    Y = tensor_from_long_format([(0, 0, 0, 0, 1.5), (0, 0, 1, 0, 2.0)], dims=(1, 1, 2, 1))
    assert Y.dims == (1, 1, 2, 1)
    assert Y.mask.all()
    assert Y.values[0, 0, 1, 0] == 2.0


def test_long_format_infers_dims_and_leaves_gaps_unobserved() -> None:
    Y = tensor_from_long_format([(1, 0, 0, 0, 3.0)])
    assert Y.dims == (2, 1, 1, 1)
    assert Y.mask.sum() == 1
    assert not Y.mask[0, 0, 0, 0]
    assert Y.values[0, 0, 0, 0] == 0.0


def test_duplicate_key_rejected() -> None:
    with pytest.raises(DataError, match="duplicate key"):
        tensor_from_long_format([(0, 0, 0, 0, 1.0), (0, 0, 0, 0, 2.0)])


@pytest.mark.parametrize(
    "record, message",
    [((0, -1, 0, 0, 1.0), "negative index"), ((0, 0, 0, 0, float("nan")), "non-finite value")],
)
def test_bad_records_rejected(record: tuple, message: str) -> None:
    with pytest.raises(DataError, match=message):
        tensor_from_long_format([record])


def test_empty_input_needs_dims() -> None:
    with pytest.raises(DataError, match="no observations"):
        tensor_from_long_format([])
    assert tensor_from_long_format([], dims=(1, 1, 1, 1)).mask.sum() == 0


def test_observed_values_must_be_finite() -> None:
    values = np.full((1, 1, 1, 1), np.inf)
    with pytest.raises(DataError, match="finite"):
        ObservationTensor(values, np.ones_like(values, dtype=bool))
    # unobserved cells may hold anything
    Y = ObservationTensor(values, np.zeros_like(values, dtype=bool))
    assert Y.values[0, 0, 0, 0] == 0.0


def test_counts_and_sums_skip_missing_replicates() -> None:
    Y = tensor_from_long_format([(0, 0, 0, 0, 1.0), (0, 0, 0, 2, 4.0)], dims=(1, 1, 1, 3))
    assert Y.counts[0, 0, 0] == 2
    assert Y.sums[0, 0, 0] == 5.0
    assert Y.observed_cells[0, 0, 0]


def test_check_coverage_names_missing_row() -> None:
    Y = tensor_from_long_format([(0, 0, 0, 0, 1.0)], dims=(2, 1, 1, 1))
    with pytest.raises(DataError, match="row 1 has no observed cells"):
        Y.check_coverage()
    Y = tensor_from_long_format([(0, 0, 0, 0, 1.0), (1, 0, 0, 0, 1.0)], dims=(2, 2, 1, 1))
    with pytest.raises(DataError, match="column 1 has no observed cells"):
        Y.check_coverage()


def test_with_mask_only_removes_cells() -> None:
    Y = tensor_from_long_format([(0, 0, 0, 0, 1.0), (0, 0, 1, 0, 2.0)], dims=(1, 1, 2, 1))
    keep = np.zeros((1, 1, 2, 1), dtype=bool)
    keep[0, 0, 1, 0] = True
    Z = Y.with_mask(keep)
    assert Z.mask.sum() == 1
    assert Z.values[0, 0, 0, 0] == 0.0
    assert Y.mask.sum() == 2


def test_csv_round_trip(tmp_path) -> None:
    rng = np.random.default_rng(0)
    values = rng.normal(size=(2, 3, 4, 2))
    mask = rng.random((2, 3, 4, 2)) < 0.7
    Y = ObservationTensor(values, mask)
    path = str(tmp_path / "y.csv")
    write_long_csv(Y, path)
    Z = read_long_csv(path, dims=Y.dims)
    np.testing.assert_array_equal(Z.mask, Y.mask)
    np.testing.assert_array_equal(Z.values, Y.values)


def test_inner_curve_examples() -> None:
    W = np.array([[1.0, 2.0]])
    V = np.array([[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]])
    state = FactorState(W, V)
    np.testing.assert_allclose(inner_curve(state, 0, 0), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(state.inner_products()[0, 0], [1.0, 2.0, 3.0])
    with pytest.raises(IndexError):
        inner_curve(state, 1, 0)


def test_inner_curve_is_bilinear() -> None:
    rng = np.random.default_rng(1)
    W1, W2 = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    V = rng.normal(size=(1, 5, 3))
    lhs = inner_curve(FactorState(2.0 * W1 + W2, V), 0, 0)
    rhs = 2.0 * inner_curve(FactorState(W1, V), 0, 0) + inner_curve(FactorState(W2, V), 0, 0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_factor_shapes_checked() -> None:
    with pytest.raises(DataError, match="inconsistent factor shapes"):
        FactorState(np.ones((2, 3)), np.ones((2, 4, 2)))


def test_shrinkage_validate() -> None:
    state = ShrinkageState.initial(M=2, L=6, rho2=0.1)
    state.validate()
    local = state.column(1)
    local.tau2[0] = 0.0
    state.set_column(1, local)
    with pytest.raises(DataError, match="tau2"):
        state.validate()


@pytest.mark.parametrize("sweeps, burn_in, thin, expected", [(10, 5, 1, 5), (10, 4, 3, 2), (100, 50, 7, 7)])
def test_retained_schedule(sweeps: int, burn_in: int, thin: int, expected: int) -> None:
    assert retained_count(sweeps, burn_in, thin) == expected
    assert sum(is_retained(s, burn_in, thin) for s in range(sweeps)) == expected


def test_posterior_samples_count_checked() -> None:
    S, N, M, T, D = 3, 2, 2, 4, 1
    kwargs = dict(loglik=np.zeros(S), sigma2=np.ones(S), sweeps=5, burn_in=2, thin=1)
    samples = PosteriorSamples(W=np.ones((S, N, D)), V=np.ones((S, M, T, D)), **kwargs)
    assert len(samples) == 3
    assert samples.curve_samples().shape == (S, N, M, T)
    np.testing.assert_allclose(samples.posterior_mean_curve(), 1.0)
    with pytest.raises(DataError, match="expected 3 snapshots"):
        PosteriorSamples(W=np.ones((2, N, D)), V=np.ones((2, M, T, D)), **dict(kwargs, loglik=np.zeros(2)))
