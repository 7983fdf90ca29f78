"""Fit the model to an observation tensor
A module that loads a run dictionary and a long-format data file, runs the Gibbs chain and saves the retained
samples, traces, DIC and predictive curves. With a grid of hyperparameters it runs one chain per grid point in
parallel and selects the configuration with the smallest DIC.

Created: 19/10/2026
"""

# imports
import copy
import itertools
import json
import logging
import os
from typing import Optional
import numpy as np
import pandas as pd
from btf.model.errors import BTFError, ConfigError, ConvergenceError
from btf.model.tensor import ObservationTensor, PosteriorSamples, read_long_csv
from btf.plotting_data.curves_plot_data import curves_frame, held_out_pairs
from btf.resources.logger import configure_logging
from btf.resources.run import FitResult, parallel_run, run_fit, trace_frame
from btf.resources.utility import (
    RunManifest,
    createFolder,
    load_json,
    produce_name_datetime,
    save_frame,
    save_json,
    save_object,
)

logger = logging.getLogger(__name__)


# modules
def load_params(path: str) -> dict:
    try:
        return load_json(path)
    except FileNotFoundError as exc:
        raise ConfigError("parameter file %s does not exist" % path) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("parameter file %s is not valid JSON: %s" % (path, exc)) from exc


def apply_overrides(params: dict, **overrides) -> dict:
    """Copy of params with every override that is not None"""
    out = copy.deepcopy(params)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def load_observations(params: dict) -> ObservationTensor:
    if not params.get("data"):
        raise ConfigError("missing required config key 'data'")
    dims = params.get("dims")
    try:
        return read_long_csv(params["data"], dims=tuple(dims) if dims else None)
    except FileNotFoundError as exc:
        raise ConfigError("data file %s does not exist" % params["data"]) from exc


def parse_grid(spec: str) -> dict:
    """
    Parse `name=v1,v2 name2=v3,...` into {name: [values]}

    Values are read as JSON scalars, so `rho2=0.001,0.01 D=1,3` gives floats and integers.
    """
    grid = {}
    for token in spec.replace(";", " ").split():
        name, sep, values = token.partition("=")
        if not sep or not name or not values:
            raise ConfigError("grid entry %r must look like name=v1,v2" % token)
        try:
            grid[name] = [json.loads(v) for v in values.split(",")]
        except json.JSONDecodeError as exc:
            raise ConfigError("grid entry %r has a non-numeric value" % token) from exc
    if not grid:
        raise ConfigError("empty grid specification")
    return grid


def grid_from_variable_parameters(variable_parameters_dict: dict) -> dict:
    """{"rho2": {"property": "rho2", "values": [...]}, ...} -> {"rho2": [...], ...}"""
    try:
        return {v["property"]: list(v["values"]) for v in variable_parameters_dict.values()}
    except KeyError as exc:
        raise ConfigError("variable parameter entries need 'property' and 'values', missing %s" % exc) from exc


def produce_param_list_grid(params_dict: dict, grid: dict) -> list[dict]:
    """Creates a list of the param dictionaries, one for every point of the full grid.

    Parameters
    ----------
    params_dict: dict,
        base run dictionary
    grid: dict
        {property: list of values}

    Returns
    -------
    params_list: list[dict]
        list of parameter dicts, the last property varying fastest
    """
    names = list(grid)
    params_list = []
    for values in itertools.product(*(grid[n] for n in names)):
        params = copy.deepcopy(params_dict)
        params.update(dict(zip(names, values)))
        params_list.append(params)
    return params_list


def factor_frames(samples: PosteriorSamples) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Long-format frames of the retained row factors and functional column factors"""
    s, i, d = np.indices(samples.W.shape).reshape(3, -1)
    W = pd.DataFrame({"sample": s, "row": i, "factor": d, "value": samples.W.reshape(-1)})
    s, j, t, d = np.indices(samples.V.shape).reshape(4, -1)
    V = pd.DataFrame({"sample": s, "col": j, "dose": t, "factor": d, "value": samples.V.reshape(-1)})
    return W, V


def write_fit_outputs(result: FitResult, Y: ObservationTensor, fileName: str, manifest: RunManifest, level: float) -> None:
    data_dir = fileName + "/Data"
    W, V = factor_frames(result.samples)
    paths = [
        save_object(result.samples, data_dir, "samples"),
        save_frame(W, data_dir, "W"),
        save_frame(V, data_dir, "V"),
        save_object(Y, data_dir, "observations"),
        save_frame(trace_frame(result.sampler), data_dir, "trace"),
        save_json({"dic": result.dic, "retained": len(result.samples)}, data_dir, "dic"),
        save_frame(curves_frame(result.samples, held_out_pairs(Y), level), fileName + "/Plots", "curves"),
    ]
    for path in paths:
        manifest.add_output(path, fileName)
    manifest.gass_degenerate = int(result.samples.meta.get("gass_degenerate", 0))
    manifest.extra.update({"dic": result.dic, **result.samples.meta})


def fit_single(
    params: dict, Y: ObservationTensor, fileName: str, resume: bool = False, command: str = "fit"
) -> FitResult:
    """
    Run one chain into fileName; the manifest is written whether the run succeeds or fails
    """
    createFolder(fileName)
    manifest = RunManifest(command=command, config=params, seed=int(params.get("seed", 0)))
    try:
        result = run_fit(params, Y, checkpoint_dir=fileName + "/Data", resume=resume)
        write_fit_outputs(result, Y, fileName, manifest, float(params.get("level", 0.9)))
        manifest.finish("ok")
        return result
    except BTFError as exc:
        manifest.finish("failed", str(exc))
        raise
    finally:
        manifest.write(fileName)


def grid_cell(job: dict) -> dict:
    """One grid point in its own subfolder; failures are reported, not raised"""
    row = {"index": job["index"], **{k: job["params"][k] for k in job["grid_keys"]}}
    try:
        result = fit_single(job["params"], job["Y"], job["fileName"], command="fit-grid-cell")
        row.update({"dic": result.dic, "status": "ok", "error": ""})
    except BTFError as exc:
        row.update({"dic": float("nan"), "status": "failed", "error": str(exc)})
    return row


def select_by_dic(report: pd.DataFrame) -> int:
    ok = report[(report["status"] == "ok") & np.isfinite(report["dic"])]
    if ok.empty:
        raise ConvergenceError("no grid configuration produced a finite DIC")
    return int(ok.loc[ok["dic"].idxmin(), "index"])


def run_grid(params: dict, grid: dict, Y: ObservationTensor, fileName: str, n_jobs: int = 1) -> pd.DataFrame:
    params_list = produce_param_list_grid(params, grid)
    jobs = [
        {
            "index": idx,
            "params": dict(p, threads=1) if n_jobs > 1 else p,
            "Y": Y,
            "fileName": os.path.join(fileName, "grid_%03d" % idx),
            "grid_keys": list(grid),
        }
        for idx, p in enumerate(params_list)
    ]
    report = pd.DataFrame(parallel_run(grid_cell, jobs, n_jobs=n_jobs, verbose=0))
    selected = select_by_dic(report)
    report["selected"] = report["index"] == selected
    logger.info(
        "grid search selected configuration %d",
        selected,
        extra={"dic": float(report.loc[report["index"] == selected, "dic"].iloc[0]), "failed": int((report["status"] != "ok").sum())},
    )
    return report


def main(
    BASE_PARAMS_LOAD: str = "btf/constants/base_params_fit.json",
    fileName: Optional[str] = None,
    data: Optional[str] = None,
    grid: Optional[str] = None,
    VARIABLE_PARAMS_LOAD: Optional[str] = None,
    resume: bool = False,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> str:
    params = apply_overrides(load_params(BASE_PARAMS_LOAD), data=data, seed=seed, threads=threads)
    fileName = fileName if fileName is not None else produce_name_datetime("fit")
    createFolder(fileName)
    configure_logging(fileName)
    logger.info("fileName: %s", fileName)

    Y = load_observations(params)
    if grid is None and VARIABLE_PARAMS_LOAD is None:
        fit_single(params, Y, fileName, resume=resume)
        return fileName

    grid_dict = parse_grid(grid) if grid is not None else grid_from_variable_parameters(load_params(VARIABLE_PARAMS_LOAD))
    manifest = RunManifest(command="fit-grid", config={"base": params, "grid": grid_dict}, seed=int(params.get("seed", 0)))
    try:
        report = run_grid(params, grid_dict, Y, fileName, n_jobs=int(params.get("threads", 1)))
        manifest.add_output(save_frame(report, fileName + "/Data", "grid_selection"), fileName)
        selected = report.loc[report["selected"]].iloc[0]
        chosen = {k: selected[k] for k in grid_dict}
        manifest.add_output(save_json({"index": int(selected["index"]), **chosen}, fileName + "/Data", "selected"), fileName)
        manifest.extra["failed_cells"] = int((report["status"] != "ok").sum())
        manifest.finish("ok")
    except BTFError as exc:
        manifest.finish("failed", str(exc))
        raise
    finally:
        manifest.write(fileName)
    return fileName


if __name__ == "__main__":
    fileName = main(BASE_PARAMS_LOAD="btf/constants/base_params_fit.json")
