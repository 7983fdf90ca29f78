"""Dose-response screen
A module that runs the dose-response pipeline on a plate CSV, or on plates simulated for the occasion: estimate the
pipetting-error mixture from the lowest concentrations, normalize the plates into a tensor, fit monotone viability
curves in [0, 1] with the gamma-mixture likelihood and export posterior predictive intervals.

Created: 19/10/2026
"""

# imports
import logging
from typing import Optional
import numpy as np
from btf.model.dose_response import (
    GammaMixture,
    PlateExperiment,
    estimate_pipetting_prior,
    fixed_width_prior,
    load_plate_csv,
    plates_to_tensor,
    pooled_control_variance,
    posterior_predictive_intervals,
)
from btf.model.errors import BTFError, PriorEstimationError
from btf.model.synthetic import gen_dose_response_plates, holdout_pairs
from btf.model.tensor import ObservationTensor
from btf.generating_data.fit_gen import apply_overrides, fit_single, load_params
from btf.generating_data.synthetic_gen import curve_frame
from btf.resources.logger import configure_logging
from btf.resources.metrics import rmse
from btf.resources.utility import RunManifest, createFolder, produce_name_datetime, save_frame, save_json

logger = logging.getLogger(__name__)


# modules
def pipetting_prior(plates: list[PlateExperiment], params: dict) -> GammaMixture:
    """Empirical-Bayes mixture, or the fixed-width fallback when `fallback_sd` is set and too few plates qualify"""
    try:
        return estimate_pipetting_prior(plates, bins=int(params.get("bins", 20)), K=int(params.get("K", 25)))
    except PriorEstimationError:
        if params.get("fallback_sd") is None:
            raise
        logger.warning("using the fixed-width pipetting prior", extra={"sd": params["fallback_sd"]})
        return fixed_width_prior(float(params["fallback_sd"]), pooled_control_variance(plates), int(params.get("K", 25)))


def dose_fit_params(params: dict, mix: GammaMixture) -> dict:
    """Run dictionary with the gamma-mixture likelihood and [0, 1] (optionally monotone) constraints"""
    monotone = "nonincreasing" if params.get("monotone", True) else None
    return dict(
        params,
        likelihood={"kind": "gamma_mixture", "mixture": mix.to_dict()},
        constraints={"lower": 0.0, "upper": 1.0, "monotone": monotone},
    )


def replicate_mean_baseline(Y: ObservationTensor) -> np.ndarray:
    return np.where(Y.observed_cells, Y.sums / np.maximum(Y.counts, 1), np.nan)


def main(
    BASE_PARAMS_LOAD: str = "btf/constants/base_params_dose_response.json",
    fileName: Optional[str] = None,
    plates_csv: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> str:
    params = apply_overrides(load_params(BASE_PARAMS_LOAD), seed=seed, threads=threads)
    fileName = fileName if fileName is not None else produce_name_datetime("dose_response")
    createFolder(fileName)
    configure_logging(fileName)
    logger.info("fileName: %s", fileName)

    rng = np.random.default_rng([int(params.get("seed", 0)), 1])
    truth = None
    if plates_csv is not None:
        plates = load_plate_csv(plates_csv)
    else:
        sim = params.get("simulate", {})
        plates, truth = gen_dose_response_plates(
            N=int(sim.get("N", 6)),
            M=int(sim.get("M", 6)),
            T=int(sim.get("T", 9)),
            R=int(sim.get("R", 6)),
            rng=rng,
            D=int(sim.get("D", 2)),
            pipetting_sd=float(sim.get("pipetting_sd", 0.1)),
            replicate_sd=float(sim.get("replicate_sd", 0.02)),
        )

    try:
        mix = pipetting_prior(plates, params)
        Y = plates_to_tensor(plates)
        if int(params.get("holdout_pairs", 0)):
            mask, held = holdout_pairs(Y.mask, int(params["holdout_pairs"]), rng)
            Y = Y.with_mask(mask)
            logger.info("held out %d curves", len(held))
    except BTFError as exc:
        failed = RunManifest(command="dose-response", config=params, seed=int(params.get("seed", 0)))
        failed.finish("failed", str(exc))
        failed.write(fileName)
        raise

    result = fit_single(dose_fit_params(params, mix), Y, fileName, command="dose-response")
    manifest = RunManifest.load(fileName)
    mix.save_json(fileName + "/Data/mixture.json")
    manifest.add_output(fileName + "/Data/mixture.json", fileName)

    level = float(params.get("predictive_level", 0.5))
    lower, upper = posterior_predictive_intervals(result.samples, mix, level, rng)
    intervals = curve_frame(lower, "lower").assign(upper=upper.reshape(-1))
    manifest.add_output(save_frame(intervals, fileName + "/Plots", "predictive_intervals"), fileName)
    if truth is not None:
        baseline = replicate_mean_baseline(Y)
        observed = Y.observed_cells
        scores = {
            "rmse_posterior_mean": rmse(result.samples.posterior_mean_curve()[observed], truth[observed]),
            "rmse_replicate_mean": rmse(baseline[observed], truth[observed]),
        }
        manifest.add_output(save_json(scores, fileName + "/Data", "truth_scores"), fileName)
        manifest.add_output(save_frame(curve_frame(truth, "theta"), fileName + "/Data", "truth"), fileName)
        logger.info("dose-response scores", extra=scores)
    manifest.write(fileName)
    return fileName


if __name__ == "__main__":
    fileName = main(BASE_PARAMS_LOAD="btf/constants/base_params_dose_response.json")
