import os
import numpy as np
import pandas as pd
from btf.resources.utility import (
    RunManifest,
    createFolder,
    load_json,
    load_object,
    save_frame,
    save_json,
    save_object,
)


def test_create_folder(tmp_path) -> None:
    run = str(tmp_path / "run")
    assert createFolder(run) == run
    assert os.path.isdir(os.path.join(run, "Data"))
    assert os.path.isdir(os.path.join(run, "Plots"))
    createFolder(run)


def test_pickle_round_trip(tmp_path) -> None:
    data = {"W": np.arange(6.0).reshape(3, 2), "name": "fit"}
    path = save_object(data, str(tmp_path), "state")
    assert path.endswith("state.pkl")
    assert not os.path.exists(path + ".tmp")
    loaded = load_object(str(tmp_path), "state")
    np.testing.assert_array_equal(loaded["W"], data["W"])
    assert loaded["name"] == "fit"


def test_json_replaces_non_finite(tmp_path) -> None:
    path = save_json({"b": np.float64(np.inf), "a": np.array([1, 2]), "c": (np.nan, 0.5)}, str(tmp_path), "dic")
    loaded = load_json(path)
    assert loaded == {"a": [1, 2], "b": None, "c": [None, 0.5]}


def test_json_keys_sorted(tmp_path) -> None:
    path = save_json({"z": 1, "a": 2}, str(tmp_path), "keys")
    with open(path) as f:
        text = f.read()
    assert text.index('"a"') < text.index('"z"')


def test_save_frame_fixed_format(tmp_path) -> None:
    frame = pd.DataFrame({"x": [1, 2], "y": [1.0 / 3.0, 2.5]})
    path = save_frame(frame, str(tmp_path), "values")
    with open(path) as f:
        assert f.read().splitlines() == ["x,y", "1,0.3333333333", "2,2.5"]


def test_manifest_round_trip(tmp_path) -> None:
    run = str(tmp_path)
    manifest = RunManifest(command="fit", config={"rho2": 0.01}, seed=3)
    assert manifest.status == "running"
    assert "numpy" in manifest.versions
    out = os.path.join(run, "Data", "dic.json")
    manifest.add_output(out, run)
    manifest.add_output(out, run)
    assert manifest.outputs == [os.path.join("Data", "dic.json")]
    manifest.finish("failed", "chain stopped")
    assert manifest.timing["elapsed_s"] >= 0.0
    manifest.write(run)
    loaded = RunManifest.load(run)
    assert loaded.status == "failed"
    assert loaded.error == "chain stopped"
    assert loaded.config == {"rho2": 0.01}
    assert loaded.outputs == manifest.outputs


def test_manifests_of_identical_runs_differ_only_in_timing(tmp_path) -> None:
    documents = []
    for name in ("a", "b"):
        run = str(tmp_path / name)
        manifest = RunManifest(command="generate poisson", config={"N": 4}, seed=7)
        manifest.add_output(os.path.join(run, "Data", "observations.csv"), run)
        manifest.finish("ok")
        manifest.write(run)
        documents.append(load_json(os.path.join(run, "manifest.json")))
    assert set(documents[0]) - set(documents[1]) == set()
    timing = [doc.pop("timing") for doc in documents]
    assert documents[0] == documents[1]
    assert set(timing[0]) == {"started", "elapsed_s"}
    assert RunManifest.load(str(tmp_path / "a")).reproducible() == documents[0]
