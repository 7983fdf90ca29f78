"""Generate synthetic instances
A module that draws one instance of a synthetic benchmark and saves it as CSV files together with its ground truth:
the constrained gamma-scale benchmark, the Poisson dynamical system, a Gaussian functional matrix, or simulated
dose-response plates.

Created: 19/10/2026
"""

# imports
import logging
from typing import Optional
import numpy as np
import numpy.typing as npt
import pandas as pd
from btf.model.dose_response import write_plate_csv
from btf.model.errors import BTFError, ConfigError
from btf.model.synthetic import (
    gen_dose_response_plates,
    gen_gass_benchmark,
    gen_gaussian_functional_matrix,
    gen_poisson_dynsys,
    holdout_pairs,
)
from btf.model.tensor import ObservationTensor, write_long_csv
from btf.resources.logger import configure_logging
from btf.resources.utility import RunManifest, createFolder, load_json, produce_name_datetime, save_frame, save_json

logger = logging.getLogger(__name__)

GENERATE_KINDS = ("gass", "poisson", "gaussian", "dose")


# modules
def curve_frame(values: npt.NDArray, name: str = "value") -> pd.DataFrame:
    """N x M x T array as a tidy row, col, dose, value frame"""
    idx = np.indices(values.shape).reshape(3, -1)
    return pd.DataFrame({"row": idx[0], "col": idx[1], "dose": idx[2], name: values.reshape(-1)})


def _write_observations(Y: ObservationTensor, fileName: str, manifest: RunManifest) -> None:
    path = fileName + "/Data/observations.csv"
    write_long_csv(Y, path)
    manifest.add_output(path, fileName)


def generate_gass(params: dict, rng: np.random.Generator, fileName: str, manifest: RunManifest) -> None:
    inst = gen_gass_benchmark(rng, R=int(params.get("R", 3)), a=float(params.get("a", 100.0)))
    R = inst.y.shape[1]
    y = pd.DataFrame(
        {"point": np.repeat(np.arange(inst.y.shape[0]), R), "replicate": np.tile(np.arange(R), inst.y.shape[0]), "value": inst.y.reshape(-1)}
    )
    truth = pd.DataFrame({"point": np.arange(inst.theta_true.size), "theta": inst.theta_true})
    manifest.add_output(save_frame(y, fileName + "/Data", "observations"), fileName)
    manifest.add_output(save_frame(truth, fileName + "/Data", "truth"), fileName)
    prior = {"mu": inst.mu, "a": inst.a, "tau": inst.tau, "b": inst.b}
    manifest.add_output(save_json(prior, fileName + "/Data", "prior"), fileName)


def generate_poisson(params: dict, rng: np.random.Generator, fileName: str, manifest: RunManifest) -> None:
    inst = gen_poisson_dynsys(
        N=int(params.get("N", 11)),
        M=int(params.get("M", 12)),
        T=int(params.get("T", 20)),
        D=int(params.get("D", 3)),
        rng=rng,
        holdout=int(params.get("holdout", 3)),
    )
    _write_observations(inst.tensor(), fileName, manifest)
    held = curve_frame(inst.Y.astype(float))[inst.holdout.reshape(-1)]
    manifest.add_output(save_frame(held.reset_index(drop=True), fileName + "/Data", "holdout"), fileName)
    manifest.add_output(save_frame(curve_frame(inst.rates, "rate"), fileName + "/Data", "truth"), fileName)


def generate_gaussian(params: dict, rng: np.random.Generator, fileName: str, manifest: RunManifest) -> None:
    Y, truth = gen_gaussian_functional_matrix(
        N=int(params.get("N", 6)),
        M=int(params.get("M", 6)),
        T=int(params.get("T", 10)),
        D=int(params.get("D", 2)),
        jump_prob=float(params.get("jump_prob", 0.05)),
        noise_sd=float(params.get("noise_sd", 0.1)),
        rng=rng,
        R=int(params.get("R", 3)),
    )
    n_holdout = int(params.get("holdout_pairs", 0))
    if n_holdout:
        mask, _ = holdout_pairs(Y.mask, n_holdout, rng)
        Y = Y.with_mask(mask)
    _write_observations(Y, fileName, manifest)
    manifest.add_output(save_frame(curve_frame(truth.theta, "theta"), fileName + "/Data", "truth"), fileName)


def generate_dose(params: dict, rng: np.random.Generator, fileName: str, manifest: RunManifest) -> None:
    plates, theta = gen_dose_response_plates(
        N=int(params.get("N", 6)),
        M=int(params.get("M", 6)),
        T=int(params.get("T", 9)),
        R=int(params.get("R", 6)),
        rng=rng,
        D=int(params.get("D", 2)),
        pipetting_sd=float(params.get("pipetting_sd", 0.1)),
        replicate_sd=float(params.get("replicate_sd", 0.02)),
    )
    path = fileName + "/Data/plates.csv"
    write_plate_csv(plates, path)
    manifest.add_output(path, fileName)
    manifest.add_output(save_frame(curve_frame(theta, "theta"), fileName + "/Data", "truth"), fileName)


GENERATORS = {"gass": generate_gass, "poisson": generate_poisson, "gaussian": generate_gaussian, "dose": generate_dose}


def generate(kind: str, params: dict, fileName: str, seed: int = 0) -> RunManifest:
    """Draw one instance of `kind` with its own generator seeded by `seed` and save it into fileName/Data"""
    if kind not in GENERATORS:
        raise ConfigError("kind must be one of %s, got %r" % (GENERATE_KINDS, kind))
    createFolder(fileName)
    manifest = RunManifest(command="generate " + kind, config=params, seed=seed)
    try:
        GENERATORS[kind](params, np.random.default_rng(seed), fileName, manifest)
        manifest.finish("ok")
    except BTFError as exc:
        manifest.finish("failed", str(exc))
        raise
    finally:
        manifest.write(fileName)
    return manifest


def main(
    kind: str = "poisson",
    BASE_PARAMS_LOAD: Optional[str] = "btf/constants/base_params_generate.json",
    fileName: Optional[str] = None,
    seed: int = 0,
) -> str:
    all_params = load_json(BASE_PARAMS_LOAD) if BASE_PARAMS_LOAD else {}
    fileName = fileName if fileName is not None else produce_name_datetime("generate_" + kind)
    createFolder(fileName)
    configure_logging(fileName)
    logger.info("fileName: %s", fileName)
    generate(kind, all_params.get(kind, {}), fileName, seed=seed)
    return fileName


if __name__ == "__main__":
    fileName = main(kind="poisson", seed=7)
