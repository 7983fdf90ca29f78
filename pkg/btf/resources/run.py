"""Run chains
A module that uses a parameter dictionary to run a Gibbs chain for the requested number of sweeps, checkpointing it
on the way so that an interrupted run can be resumed exactly. Multiple independent runs (grid cells, benchmark
trials) can also be executed in parallel.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass
import logging
import multiprocessing
import os
import time
from typing import Callable, Optional
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from btf.model.errors import ConfigError, DataError
from btf.model.gibbs import FitConfig, GibbsSampler, compute_dic, fit
from btf.model.tensor import ObservationTensor, PosteriorSamples
from btf.resources.utility import load_object, save_object

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint"


# modules
def _sampling_keys(cfg: FitConfig) -> dict:
    """Configuration entries that change the draws; thread count and logging cadence do not"""
    return {k: v for k, v in cfg.to_dict().items() if k not in ("threads", "log_every", "checkpoint_every")}


def load_checkpoint(checkpoint_dir: str, cfg: FitConfig) -> Optional[GibbsSampler]:
    """
    Restore the chain pickled in checkpoint_dir, or None when there is no checkpoint

    Raises
    ------
    ConfigError
        when the checkpoint was written with a different configuration
    """
    if not os.path.exists(os.path.join(checkpoint_dir, CHECKPOINT_NAME + ".pkl")):
        return None
    sampler = load_object(checkpoint_dir, CHECKPOINT_NAME)
    if not isinstance(sampler, GibbsSampler):
        raise ConfigError("%s does not hold a Gibbs chain" % checkpoint_dir)
    if _sampling_keys(sampler.cfg) != _sampling_keys(cfg):
        raise ConfigError("checkpoint in %s was written with a different configuration" % checkpoint_dir)
    sampler.cfg = cfg
    logger.info("resuming from sweep %d", sampler.sweep, extra={"checkpoint": checkpoint_dir})
    return sampler


def checkpoint_callback(checkpoint_dir: str, every: int) -> Callable[[GibbsSampler], None]:
    """Pickle the whole chain after every `every` sweeps and after the last one"""

    def callback(sampler: GibbsSampler) -> None:
        if sampler.sweep % every == 0 or sampler.done:
            save_object(sampler, checkpoint_dir, CHECKPOINT_NAME)

    return callback


####SINGLE SHOT RUN
def generate_data(
    parameters: dict,
    Y: ObservationTensor,
    checkpoint_dir: Optional[str] = None,
    resume: bool = False,
    print_simu: int = 0,
) -> GibbsSampler:
    """
    Build a chain from a parameter dictionary and run it for parameters["sweeps"] sweeps

    Parameters
    ----------
    parameters: dict
        run dictionary, validated by FitConfig.from_dict before any sampling
    Y: ObservationTensor
        observations
    checkpoint_dir: str, optional
        folder receiving checkpoint.pkl every checkpoint_every sweeps
    resume: bool
        continue the chain found in checkpoint_dir instead of starting afresh

    Returns
    -------
    GibbsSampler
        the completed chain
    """
    start_time = time.time()
    cfg = FitConfig.from_dict(parameters)
    sampler = load_checkpoint(checkpoint_dir, cfg) if (resume and checkpoint_dir is not None) else None
    if sampler is None:
        sampler = GibbsSampler(Y, cfg)
    callback = checkpoint_callback(checkpoint_dir, cfg.checkpoint_every) if checkpoint_dir is not None else None

    #### RUN SWEEPS
    fit(Y, cfg, sampler=sampler, callback=callback)

    if print_simu:
        logger.info("chain finished in %.1f s", time.time() - start_time, extra={"sweeps": cfg.sweeps})
    return sampler


@dataclass
class FitResult:
    sampler: GibbsSampler
    samples: PosteriorSamples
    dic: float


def run_fit(
    parameters: dict, Y: ObservationTensor, checkpoint_dir: Optional[str] = None, resume: bool = False
) -> FitResult:
    """Run a chain and score it by DIC (NaN when the chain kept too few samples for DIC)"""
    sampler = generate_data(parameters, Y, checkpoint_dir, resume)
    samples = sampler.samples()
    try:
        dic = compute_dic(samples, Y, sampler.lik)
    except DataError as exc:
        logger.warning("DIC unavailable: %s", exc)
        dic = float("nan")
    return FitResult(sampler=sampler, samples=samples, dic=dic)


def trace_frame(sampler: GibbsSampler) -> pd.DataFrame:
    """Per-sweep traces of a chain as a tidy frame"""
    n = len(sampler.history_loglik)
    frame = pd.DataFrame(
        {
            "sweep": np.arange(n),
            "loglik": sampler.history_loglik,
            "sigma2": sampler.history_sigma2,
            "degenerate_gass": sampler.history_degenerate,
        }
    )
    if sampler.history_nu2:
        frame["nu2"] = sampler.history_nu2
    return frame


def parallel_run(func: Callable, params_list: list, n_jobs: Optional[int] = None, verbose: int = 10) -> list:
    """
    Evaluate func on every entry of params_list, one independent job per entry

    Every job derives its randomness from its own parameters, so results do not depend on n_jobs.
    """
    num_cores = n_jobs if n_jobs is not None else multiprocessing.cpu_count()
    if num_cores == 1:
        return [func(p) for p in params_list]
    return Parallel(n_jobs=num_cores, verbose=verbose)(delayed(func)(p) for p in params_list)
