import json

import numpy as np
import pandas as pd
import pytest

from dartfx.hypertime.builder import build
from dartfx.hypertime.errors import HypertimeError, ModelError
from dartfx.hypertime.model import BuildConfig, FitConfig, RunConfig
from dartfx.hypertime.synthetic import daily_cosine
from dartfx.hypertime.utils import atomic_write, load_config, load_model, save_model, write_heatmap, write_table


@pytest.fixture(scope="module")
def small_model():
    return build(daily_cosine(days=2, step=900.0), BuildConfig(fit=FitConfig(n_clusters=1), max_h=1))


def test_atomic_write(tmp_path):
    target = tmp_path / "out" / "file.txt"
    atomic_write(target, "first\n")
    assert target.read_text() == "first\n"
    with pytest.raises(FileExistsError):
        atomic_write(target, "second\n")
    assert target.read_text() == "first\n"
    atomic_write(target, "second\n", force=True)
    assert target.read_text() == "second\n"
    assert sorted(p.name for p in target.parent.iterdir()) == ["file.txt"]


def test_write_table(tmp_path):
    path = tmp_path / "errors.csv"
    write_table(pd.DataFrame({"method": ["Mean"], "fold": [1], "error": [0.5]}), path)
    assert path.read_text() == "method,fold,error\nMean,1,0.5\n"


def test_write_heatmap(tmp_path):
    path = tmp_path / "heatmap.dat"
    write_heatmap(pd.DataFrame({"x1": [0.25], "t_bin": [3], "d": [2.0], "p": [1.5]}), path)
    assert path.read_text().splitlines() == ["# x1 t_bin d p", "0.25 3 2.0 1.5"]


def test_model_round_trip(tmp_path, small_model):
    path = tmp_path / "model.json"
    save_model(small_model, path)
    loaded = load_model(path)
    assert loaded == small_model
    assert json.loads(path.read_text())["format_version"] == 1


def test_load_model_errors(tmp_path, small_model):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{}")
    with pytest.raises(ModelError):
        load_model(broken)
    future = tmp_path / "future.json"
    future.write_text(small_model.model_copy(update={"format_version": 99}).model_dump_json())
    with pytest.raises(ModelError):
        load_model(future)


@pytest.mark.parametrize(("upper", "lower", "problem"), [(0.5, 0.0, "symmetric"), (2.0, 2.0, "positive definite")])
def test_load_model_rejects_bad_covariances(tmp_path, small_model, upper, lower, problem):
    assert small_model.layout.dimension == 3
    saved = json.loads(small_model.model_dump_json())
    covariance = np.eye(small_model.layout.dimension)
    covariance[0, -1], covariance[-1, 0] = upper, lower
    saved["mixture"]["components"][0]["covariance"] = covariance.tolist()
    path = tmp_path / "model.json"
    path.write_text(json.dumps(saved))
    with pytest.raises(ModelError, match=problem):
        load_model(path)


def test_load_config(write_text):
    path = write_text("hypertime.env", "CLUSTERS=auto\nGRID_SPATIAL=0.1, 0.2\nclamp=0:1\nmax-h=2\nseed=\n")
    values = load_config(path)
    assert values == {"clusters": "auto", "grid_spatial": ["0.1", "0.2"], "clamp": ("0", "1"), "max_h": "2"}
    cfg = RunConfig.model_validate(values)
    assert cfg.grid_spatial == [0.1, 0.2]
    assert cfg.clamp == (0.0, 1.0)
    build_cfg = cfg.build_config()
    assert build_cfg.auto_clusters
    assert build_cfg.fit.backend == "km"
    assert build_cfg.fit.n_clusters == 1
    assert build_cfg.max_h == 2


def test_load_config_rejects_unknown_keys(write_text):
    with pytest.raises(HypertimeError):
        load_config(write_text("bad.env", "COLOR=blue\n"))
    with pytest.raises(FileNotFoundError):
        load_config(write_text("ok.env", "").parent / "absent.env")


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.build_config().fit.n_clusters == 3
    assert cfg.evaluation_config().clusters == [1, 2, 3, 4, 5]
    with pytest.raises(ValueError, match="clusters"):
        RunConfig(clusters="many")
