"""Predictive curves as plot-ready data
Loads the posterior samples of a fit and writes one tidy row per (row, column, dose) with the posterior-mean curve
and its central credible band, flagging pairs that had no observations.

Created: 19/10/2026
"""

# imports
from typing import Optional
import numpy as np
import numpy.typing as npt
import pandas as pd
from btf.model.tensor import ObservationTensor, PosteriorSamples
from btf.resources.metrics import credible_interval
from btf.resources.utility import load_object, save_frame

CURVE_COLUMNS = ["row", "col", "dose", "mean", "lower", "upper", "held_out"]


# modules
def curves_frame(samples: PosteriorSamples, held_out: Optional[npt.NDArray] = None, level: float = 0.9) -> pd.DataFrame:
    """
    Parameters
    ----------
    samples: PosteriorSamples
    held_out: npt.NDArray, optional
        N x M boolean, true for pairs without observations
    level: float
        mass of the central band

    Returns
    -------
    pd.DataFrame
        columns row, col, dose, mean, lower, upper, held_out
    """
    curves = samples.curve_samples()
    mean = curves.mean(axis=0)
    lower, upper = credible_interval(curves, level)
    N, M, T = mean.shape
    if held_out is None:
        held_out = np.zeros((N, M), dtype=bool)
    i, j, t = (a.reshape(-1) for a in np.meshgrid(np.arange(N), np.arange(M), np.arange(T), indexing="ij"))
    return pd.DataFrame(
        {
            "row": i,
            "col": j,
            "dose": t,
            "mean": mean.reshape(-1),
            "lower": lower.reshape(-1),
            "upper": upper.reshape(-1),
            "held_out": np.asarray(held_out, dtype=bool)[i, j],
        },
        columns=CURVE_COLUMNS,
    )


def held_out_pairs(Y: ObservationTensor) -> npt.NDArray:
    return ~Y.mask.any(axis=(2, 3))


def main(fileName: str = "results/fit", level: float = 0.9) -> str:
    samples = load_object(fileName + "/Data", "samples")
    Y = load_object(fileName + "/Data", "observations")
    return save_frame(curves_frame(samples, held_out_pairs(Y), level), fileName + "/Plots", "curves")


if __name__ == "__main__":
    main(fileName="results/fit")
