"""Evaluation metrics
A module with the point and interval scores used by the benchmarks: squared, absolute and root mean squared error,
credible-interval coverage and the held-out negative log-likelihood averaged over posterior samples.

Created: 19/10/2026
"""

# imports
from typing import Optional
import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.special import logsumexp
from btf.model.errors import DataError


# modules
def _paired(pred: npt.ArrayLike, truth: npt.ArrayLike) -> tuple[npt.NDArray, npt.NDArray]:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DataError("prediction shape %s does not match truth shape %s" % (pred.shape, truth.shape))
    if pred.size == 0:
        raise DataError("cannot score an empty prediction")
    return pred, truth


def mse(pred: npt.ArrayLike, truth: npt.ArrayLike) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred: npt.ArrayLike, truth: npt.ArrayLike) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred: npt.ArrayLike, truth: npt.ArrayLike) -> float:
    return float(np.sqrt(mse(pred, truth)))


def credible_interval(samples: npt.ArrayLike, level: float = 0.9, axis: int = 0) -> tuple[npt.NDArray, npt.NDArray]:
    """Central interval of the draws along `axis`"""
    if not 0 < level < 1:
        raise DataError("credible level must lie in (0, 1), got %r" % level)
    samples = np.asarray(samples, dtype=float)
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(samples, [alpha, 1.0 - alpha], axis=axis)
    return lower, upper


def coverage(lower: npt.ArrayLike, upper: npt.ArrayLike, truth: npt.ArrayLike) -> float:
    """Fraction of truth points inside their closed interval [lower, upper]"""
    lower, truth_l = _paired(lower, truth)
    upper, _ = _paired(upper, truth)
    return float(np.mean((lower <= truth_l) & (truth_l <= upper)))


def nll(loglik_samples: npt.ArrayLike) -> float:
    """
    Held-out negative log-likelihood per observation

    Parameters
    ----------
    loglik_samples: npt.ArrayLike
        S x n log-likelihood of each of n held-out observations under each of S posterior samples

    Returns
    -------
    float
        mean over observations of -log((1/S) sum_s p(y_n | sample s))
    """
    ll = np.asarray(loglik_samples, dtype=float)
    if ll.ndim == 1:
        ll = ll[:, None]
    if ll.ndim != 2 or ll.shape[0] == 0 or ll.shape[1] == 0:
        raise DataError("expected an S x n array of log-likelihoods, got shape %s" % (ll.shape,))
    per_point = logsumexp(ll, axis=0) - np.log(ll.shape[0])
    return float(-np.mean(per_point))


def mean_se(values: npt.ArrayLike) -> tuple[float, Optional[float]]:
    """Mean and standard error over finite values; the error is None with fewer than two of them"""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return float("nan"), None
    if values.size < 2:
        return float(values.mean()), None
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def format_mean_se(values: npt.ArrayLike, scale: float = 1.0, digits: int = 2) -> str:
    """`mean ± se` as printed in the benchmark tables, `mean ± n/a` for a single trial"""
    mean, se = mean_se(np.asarray(values, dtype=float) * scale)
    if not np.isfinite(mean):
        return "n/a"
    se_text = "n/a" if se is None else "%.*f" % (digits, se)
    return "%.*f ± %s" % (digits, mean, se_text)


def metrics_report(
    pred: npt.ArrayLike,
    truth: npt.ArrayLike,
    lower: Optional[npt.ArrayLike] = None,
    upper: Optional[npt.ArrayLike] = None,
    loglik_samples: Optional[npt.ArrayLike] = None,
    level: float = 0.9,
) -> dict:
    """Every metric computable from the supplied arrays"""
    report = {"mse": mse(pred, truth), "mae": mae(pred, truth), "rmse": rmse(pred, truth), "n": int(np.size(truth))}
    if lower is not None and upper is not None:
        report["coverage"] = coverage(lower, upper, truth)
        report["level"] = level
    if loglik_samples is not None:
        report["nll"] = nll(loglik_samples)
    return report


def _value_column(frame: pd.DataFrame, keys: tuple, preferred: Optional[str]) -> str:
    if preferred is not None:
        if preferred not in frame.columns:
            raise DataError("column %r not found, have %s" % (preferred, list(frame.columns)))
        return preferred
    candidates = [c for c in frame.columns if c not in keys and c not in ("lower", "upper", "held_out")]
    if "mean" in candidates:
        return "mean"
    if len(candidates) != 1:
        raise DataError("cannot pick a value column among %s" % candidates)
    return candidates[0]


def score_frames(
    pred: pd.DataFrame,
    truth: pd.DataFrame,
    keys: tuple = ("row", "col", "dose"),
    pred_col: Optional[str] = None,
    truth_col: Optional[str] = None,
    level: float = 0.9,
) -> dict:
    """
    Score a tidy prediction frame against a tidy truth frame joined on `keys`

    Coverage is added when the prediction carries `lower` and `upper` columns.

    Raises
    ------
    DataError
        when some truth row has no matching prediction
    """
    keys = tuple(k for k in keys if k in truth.columns)
    p_col = _value_column(pred, keys, pred_col)
    t_col = _value_column(truth, keys, truth_col)
    truth = truth[list(keys) + [t_col]].rename(columns={t_col: "__truth"})
    merged = truth.merge(pred, on=list(keys), how="inner")
    if len(merged) != len(truth):
        raise DataError("%d of %d truth rows have no prediction" % (len(truth) - len(merged), len(truth)))
    has_band = "lower" in merged.columns and "upper" in merged.columns
    return metrics_report(
        merged[p_col],
        merged["__truth"],
        lower=merged["lower"] if has_band else None,
        upper=merged["upper"] if has_band else None,
        level=level,
    )
