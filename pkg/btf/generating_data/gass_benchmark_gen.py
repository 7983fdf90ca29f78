"""Constrained gamma-scale benchmark
A module that compares GASS with four elliptical slice sampling baselines on draws from a monotone, bounded
squared-exponential prior observed through gamma noise:

- RS: ESS with every constraint folded into the likelihood as -inf
- LRS: ESS on logits mapped through the logistic function, constraints folded into the likelihood
- PP: unconstrained ESS, each retained sample projected by PAV and clipped to [0.1, 1]
- LPP: ESS on logits, each retained sample projected by PAV and clipped to [0.1, 1]

Every sampler runs 2m steps and keeps the last m. Trials run in parallel and a failing sampler only loses its own
row of the report.

Created: 19/10/2026
"""

# imports
import logging
from typing import Callable, Optional
import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.special import expit, gammaln, logit
from btf.model.errors import BTFError, ConfigError
from btf.model.samplers import GassConfig, GassStats, GaussianFactor, ess_step, gass_step, pav_monotone_projection
from btf.model.synthetic import GASS_BENCHMARK_LOWER, GASS_BENCHMARK_UPPER, GassBenchmarkInstance, gen_gass_benchmark
from btf.resources.logger import configure_logging
from btf.resources.metrics import coverage, credible_interval, format_mean_se, mse
from btf.resources.run import parallel_run
from btf.resources.utility import RunManifest, createFolder, load_json, produce_name_datetime, save_frame

logger = logging.getLogger(__name__)

METHODS = ("GASS", "RS", "LRS", "PP", "LPP")


# modules
def gamma_loglik(theta: npt.NDArray, y: npt.NDArray, a: float) -> float:
    """sum_ir log Ga(y_ir; shape a, scale theta_i), -inf unless every theta_i > 0"""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        return -np.inf
    t = theta[:, None]
    return float(np.sum((a - 1.0) * np.log(y) - y / t - a * np.log(t) - gammaln(a)))


def project_samples(samples: npt.NDArray) -> npt.NDArray:
    """PAV onto nonincreasing sequences, then clip into the bounds"""
    projected = np.array([pav_monotone_projection(s, "nonincreasing") for s in samples])
    return np.clip(projected, GASS_BENCHMARK_LOWER, GASS_BENCHMARK_UPPER)


def _run_chain(step: Callable[[npt.NDArray], npt.NDArray], x0: npt.NDArray, m: int) -> npt.NDArray:
    x = x0.copy()
    kept = np.empty((m, x0.size))
    for s in range(2 * m):
        x = step(x)
        if s >= m:
            kept[s - m] = x
    return kept


def run_gass(inst: GassBenchmarkInstance, m: int, rng: np.random.Generator, cfg: Optional[GassConfig] = None) -> npt.NDArray:
    cfg = cfg if cfg is not None else GassConfig()
    factor = GaussianFactor.from_covariance(inst.sigma)
    cons = inst.constraints
    stats = GassStats()

    def loglik(theta):
        return gamma_loglik(theta, inst.y, inst.a)

    samples = _run_chain(lambda x: gass_step(x, inst.mu, factor, loglik, cons, cfg, rng, stats), inst.mu, m)
    logger.debug("GASS benchmark chain", extra={"steps": stats.steps, "degenerate": stats.degenerate})
    return samples


def run_rs(inst: GassBenchmarkInstance, m: int, rng: np.random.Generator) -> npt.NDArray:
    factor = GaussianFactor.from_covariance(inst.sigma)
    cons = inst.constraints

    def loglik(theta):
        return gamma_loglik(theta, inst.y, inst.a) if cons.satisfied(theta, tol=0.0) else -np.inf

    return _run_chain(lambda x: ess_step(x, inst.mu, factor, loglik, rng), inst.mu, m)


def run_lrs(inst: GassBenchmarkInstance, m: int, rng: np.random.Generator) -> npt.NDArray:
    factor = GaussianFactor.from_covariance(inst.sigma)
    cons = inst.constraints
    mu = logit(inst.mu)

    def loglik(z):
        theta = expit(z)
        return gamma_loglik(theta, inst.y, inst.a) if cons.satisfied(theta, tol=0.0) else -np.inf

    return expit(_run_chain(lambda z: ess_step(z, mu, factor, loglik, rng), mu, m))


def run_pp(inst: GassBenchmarkInstance, m: int, rng: np.random.Generator) -> npt.NDArray:
    factor = GaussianFactor.from_covariance(inst.sigma)

    def loglik(theta):
        return gamma_loglik(theta, inst.y, inst.a)

    return project_samples(_run_chain(lambda x: ess_step(x, inst.mu, factor, loglik, rng), inst.mu, m))


def run_lpp(inst: GassBenchmarkInstance, m: int, rng: np.random.Generator) -> npt.NDArray:
    factor = GaussianFactor.from_covariance(inst.sigma)
    mu = logit(inst.mu)

    def loglik(z):
        return gamma_loglik(expit(z), inst.y, inst.a)

    return project_samples(expit(_run_chain(lambda z: ess_step(z, mu, factor, loglik, rng), mu, m)))


SAMPLERS = {"GASS": run_gass, "RS": run_rs, "LRS": run_lrs, "PP": run_pp, "LPP": run_lpp}


def run_trial(job: dict) -> list[dict]:
    """
    One benchmark instance scored by every requested sampler

    Parameters
    ----------
    job: dict
        {"trial", "seed", "m", "methods", "level"}; the instance uses stream (seed, trial, 0) and sampler k the
        stream (seed, trial, k + 1)

    Returns
    -------
    list[dict]
        one row per sampler with mse, coverage, status and error
    """
    trial, seed, m = job["trial"], job["seed"], job["m"]
    inst = gen_gass_benchmark(np.random.default_rng([seed, trial, 0]))
    rows = []
    for k, method in enumerate(job["methods"]):
        row = {"trial": trial, "method": method, "m": m}
        try:
            samples = SAMPLERS[method](inst, m, np.random.default_rng([seed, trial, k + 1]))
            lower, upper = credible_interval(samples, job.get("level", 0.9))
            row.update(
                mse=mse(samples.mean(axis=0), inst.theta_true),
                coverage=coverage(lower, upper, inst.theta_true),
                status="ok",
                error="",
            )
        except BTFError as exc:
            logger.warning("%s failed on trial %d: %s", method, trial, exc)
            row.update(mse=np.nan, coverage=np.nan, status="failed", error=str(exc))
        rows.append(row)
    return rows


def summary_table(trials: pd.DataFrame) -> pd.DataFrame:
    """Mean ± standard error of MSE (x 10^3) and coverage per sampler and m, with failure counts"""
    records = []
    for (m, method), group in trials.groupby(["m", "method"], sort=False):
        ok = group[group["status"] == "ok"]
        records.append(
            {
                "m": m,
                "method": method,
                "mse_x1e3": format_mean_se(ok["mse"], scale=1e3),
                "coverage": format_mean_se(ok["coverage"]),
                "mean_mse": float(ok["mse"].mean()) if len(ok) else np.nan,
                "mean_coverage": float(ok["coverage"].mean()) if len(ok) else np.nan,
                "failures": int((group["status"] != "ok").sum()),
            }
        )
    return pd.DataFrame(records)


def run_benchmark(params: dict, n_jobs: int = 1) -> pd.DataFrame:
    trials = int(params.get("trials", 20))
    if trials < 1:
        raise ConfigError("trials must be at least 1, got %d" % trials)
    methods = list(params.get("methods", METHODS))
    unknown = [x for x in methods if x not in SAMPLERS]
    if unknown:
        raise ConfigError("unknown samplers %s, choose from %s" % (unknown, METHODS))
    m_values = params.get("m", [1000, 5000])
    m_values = [int(v) for v in (m_values if isinstance(m_values, list) else [m_values])]
    jobs = [
        {"trial": t, "seed": int(params.get("seed", 0)), "m": m, "methods": methods, "level": params.get("level", 0.9)}
        for m in m_values
        for t in range(trials)
    ]
    rows = parallel_run(run_trial, jobs, n_jobs=n_jobs, verbose=0)
    return pd.DataFrame([r for trial_rows in rows for r in trial_rows])


def main(
    BASE_PARAMS_LOAD: str = "btf/constants/base_params_gass_benchmark.json",
    fileName: Optional[str] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    m: Optional[int] = None,
    threads: int = 1,
) -> str:
    params = load_json(BASE_PARAMS_LOAD)
    params.update({k: v for k, v in {"seed": seed, "trials": trials, "m": m}.items() if v is not None})
    fileName = fileName if fileName is not None else produce_name_datetime("gass_benchmark")
    createFolder(fileName)
    configure_logging(fileName)
    logger.info("fileName: %s", fileName)

    manifest = RunManifest(command="benchmark gass-table1", config=params, seed=int(params.get("seed", 0)))
    try:
        frame = run_benchmark(params, n_jobs=threads)
        table = summary_table(frame)
        manifest.add_output(save_frame(frame, fileName + "/Plots", "trials"), fileName)
        manifest.add_output(save_frame(table, fileName + "/Data", "summary"), fileName)
        manifest.extra["failures"] = int((frame["status"] != "ok").sum())
        logger.info("benchmark table\n%s", table[["m", "method", "mse_x1e3", "coverage", "failures"]].to_string(index=False))
        manifest.finish("ok")
    except BTFError as exc:
        manifest.finish("failed", str(exc))
        raise
    finally:
        manifest.write(fileName)
    return fileName


if __name__ == "__main__":
    fileName = main(BASE_PARAMS_LOAD="btf/constants/base_params_gass_benchmark.json")
