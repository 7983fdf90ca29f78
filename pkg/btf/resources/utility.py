"""Contains functions that are not crucial to the model itself and are shared amongst files.
A module that aides in preparing folders, saving and loading objects, writing tidy CSV and JSON outputs and keeping
the manifest of a run.

Created: 19/10/2026
"""

# imports
from dataclasses import asdict, dataclass, field
import datetime
from importlib import metadata
import json
import os
import pickle
import platform
import time
from typing import Any, Optional
import numpy as np
import pandas as pd

MANIFEST_NAME = "manifest.json"
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "joblib", "scikit-learn", "statsmodels", "polyagamma")


# modules
def produce_name_datetime(root: str) -> str:
    fileName = "results/" + root + "_" + datetime.datetime.now().strftime("%H_%M_%S__%d_%m_%Y")
    return fileName


def createFolder(fileName: str) -> str:
    """
    Create the run folder with its Data and Plots subfolders if they do not exist yet

    Parameters
    ----------
    fileName: str
        run folder, e.g. produced by produce_name_datetime

    Returns
    -------
    str
        the run folder
    """
    try:
        for sub in ("Data", "Plots"):
            os.makedirs(os.path.join(fileName, sub), exist_ok=True)
    except OSError as exc:
        raise OSError("cannot create output folder %s: %s" % (fileName, exc)) from exc
    return fileName


def save_object(data: Any, fileName: str, objectName: str) -> str:
    """save single object as a pickle object

    Parameters
    ----------
    data: object,
        object to be saved
    fileName: str
        where to save it e.g in the results folder in data folder
    objectName: str
        what name to give the saved object

    Returns
    -------
    str
        path of the pickle file
    """
    path = os.path.join(fileName, objectName + ".pkl")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        pickle.dump(data, f)
    os.replace(tmp, path)
    return path


def load_object(fileName: str, objectName: str) -> Any:
    """load single pickle file

    Parameters
    ----------
    fileName: str
        where to load it from e.g in the results folder in data folder
    objectName: str
        what name of the object to load is

    Returns
    -------
    data: object
        the pickle file loaded
    """
    with open(os.path.join(fileName, objectName + ".pkl"), "rb") as f:
        data = pickle.load(f)
    return data


def _to_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def save_json(data: Any, fileName: str, objectName: str) -> str:
    """Write a JSON document with sorted keys, replacing any previous version atomically"""
    path = os.path.join(fileName, objectName + ".json")
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(_to_builtin(data), f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    return path


def load_json(path: str) -> Any:
    with open(path) as f:
        return json.load(f)


def save_frame(frame: pd.DataFrame, fileName: str, objectName: str) -> str:
    """Write a tidy CSV with a fixed float format so repeated runs are byte-identical"""
    path = os.path.join(fileName, objectName + ".csv")
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def package_versions() -> dict:
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


@dataclass
class RunManifest:
    """
    Record of one command: enough to re-run it and to find every file it wrote

    Attributes
    ----------
    command: str
    config: dict
        echo of the parameters the command ran with
    seed: int
    status: str
        "running", "ok" or "failed"
    outputs: list
        paths written, relative to the run folder
    timing: dict
        wall-clock start and duration, the only fields that differ between identical runs
    """

    command: str
    config: dict
    seed: int
    versions: dict = field(default_factory=package_versions)
    status: str = "running"
    error: Optional[str] = None
    timing: dict = field(default_factory=lambda: {"started": time.time(), "elapsed_s": 0.0})
    gass_degenerate: int = 0
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add_output(self, path: str, fileName: str) -> None:
        rel = os.path.relpath(path, fileName)
        if rel not in self.outputs:
            self.outputs.append(rel)

    def finish(self, status: str = "ok", error: Optional[str] = None) -> None:
        self.status = status
        self.error = error
        self.timing["elapsed_s"] = time.time() - self.timing["started"]

    def write(self, fileName: str) -> str:
        os.makedirs(fileName, exist_ok=True)
        return save_json(asdict(self), fileName, MANIFEST_NAME[: -len(".json")])

    def reproducible(self) -> dict:
        """Manifest content without the timing block"""
        data = asdict(self)
        del data["timing"]
        return data

    @classmethod
    def load(cls, fileName: str) -> "RunManifest":
        data = load_json(os.path.join(fileName, MANIFEST_NAME))
        return cls(**data)
