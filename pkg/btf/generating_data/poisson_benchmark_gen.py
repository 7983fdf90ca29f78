"""Nonstationary Poisson dynamical system benchmark
A module that fits the black-box Poisson model to instances of the plateau-and-jump rate system with a block of
curves held out, and scores the posterior-mean rate on the held-out counts by MAE, RMSE and the negative
log-likelihood averaged over posterior samples.

Created: 19/10/2026
"""

# imports
import logging
from typing import Optional
import numpy as np
import pandas as pd
from scipy.stats import poisson
from btf.model.errors import BTFError, ConfigError
from btf.model.synthetic import gen_poisson_dynsys
from btf.resources.logger import configure_logging
from btf.resources.metrics import format_mean_se, mae, nll, rmse
from btf.resources.run import generate_data, parallel_run
from btf.resources.utility import RunManifest, createFolder, load_json, produce_name_datetime, save_frame

logger = logging.getLogger(__name__)

SCORES = ("nll", "mae", "rmse", "mae_rate")


# modules
def run_trial(job: dict) -> dict:
    """
    Generate instance `trial`, fit it with the chain seeded by (seed + trial) and score the held-out block
    """
    params, trial = job["params"], job["trial"]
    seed = int(params.get("seed", 0))
    row = {"trial": trial}
    try:
        inst = gen_poisson_dynsys(
            N=int(params.get("N", 11)),
            M=int(params.get("M", 12)),
            T=int(params.get("T", 20)),
            D=int(params.get("D_true", 3)),
            rng=np.random.default_rng([seed, trial]),
            holdout=int(params.get("holdout", 3)),
        )
        sampler = generate_data(dict(params, seed=seed + trial), inst.tensor())
        curves = sampler.samples().curve_samples()
        held = inst.holdout
        y_held = inst.Y[held]
        rate_samples = curves[:, held]
        pred = rate_samples.mean(axis=0)
        loglik = poisson.logpmf(y_held[None, :], np.maximum(rate_samples, 1e-300))
        row.update(
            nll=nll(loglik),
            mae=mae(pred, y_held),
            rmse=rmse(pred, y_held),
            mae_rate=mae(pred, inst.rates[held]),
            degenerate=sampler.gass_stats.degenerate,
            status="ok",
            error="",
        )
    except BTFError as exc:
        logger.warning("trial %d failed: %s", trial, exc)
        row.update({k: np.nan for k in SCORES}, degenerate=0, status="failed", error=str(exc))
    return row


def summary_table(trials: pd.DataFrame) -> pd.DataFrame:
    ok = trials[trials["status"] == "ok"]
    record = {"method": "BTF"}
    record.update({score.upper(): format_mean_se(ok[score]) for score in ("nll", "mae", "rmse")})
    record["failures"] = int((trials["status"] != "ok").sum())
    return pd.DataFrame([record])


def run_benchmark(params: dict, n_jobs: int = 1) -> pd.DataFrame:
    trials = int(params.get("trials", 3))
    if trials < 1:
        raise ConfigError("trials must be at least 1, got %d" % trials)
    jobs = [{"params": dict(params, threads=1), "trial": t} for t in range(trials)]
    return pd.DataFrame(parallel_run(run_trial, jobs, n_jobs=n_jobs, verbose=0))


def main(
    BASE_PARAMS_LOAD: str = "btf/constants/base_params_poisson_benchmark.json",
    fileName: Optional[str] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    threads: int = 1,
) -> str:
    params = load_json(BASE_PARAMS_LOAD)
    params.update({k: v for k, v in {"seed": seed, "trials": trials}.items() if v is not None})
    fileName = fileName if fileName is not None else produce_name_datetime("poisson_benchmark")
    createFolder(fileName)
    configure_logging(fileName)
    logger.info("fileName: %s", fileName)

    manifest = RunManifest(command="benchmark poisson-table2", config=params, seed=int(params.get("seed", 0)))
    try:
        frame = run_benchmark(params, n_jobs=threads)
        table = summary_table(frame)
        manifest.add_output(save_frame(frame, fileName + "/Plots", "trials"), fileName)
        manifest.add_output(save_frame(table, fileName + "/Data", "summary"), fileName)
        manifest.gass_degenerate = int(frame["degenerate"].sum())
        manifest.extra.update(failures=int((frame["status"] != "ok").sum()), nll="log-mean-exp over retained samples")
        logger.info("benchmark table\n%s", table.to_string(index=False))
        manifest.finish("ok")
    except BTFError as exc:
        manifest.finish("failed", str(exc))
        raise
    finally:
        manifest.write(fileName)
    return fileName


if __name__ == "__main__":
    fileName = main(BASE_PARAMS_LOAD="btf/constants/base_params_poisson_benchmark.json")
