import json

import numpy as np
import pandas as pd
import pytest

from constants import CHECKPOINT_FORMAT_VERSION, DATASET_COLUMNS, TELEMETRY_COLUMNS
from compliance_core.compliance import ControlTick
from compliance_core.data_io import (
    load_checkpoint, load_dataset, read_csv, save_checkpoint, save_dataset, telemetry_frame,
    units_line, write_csv,
)
from compliance_core.errors import CheckpointError
from compliance_core.io_utils import safe_read_json, safe_write_json
from compliance_core.training import Normalizer, TensionPredictor, init_params


def test_units_line():
    assert units_line(["t", "q1", "T3", "session"]) == "# units: t=s, q1=mm, T3=N"
    assert units_line(["Fext2", "v1"]) == "# units: Fext2=N, v1=mm/s"


def test_csv_starts_with_units_comment(tmp_path, linear_df):
    path = save_dataset(linear_df, tmp_path / "dataset.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# units: t=s, q1=mm")
    assert lines[1] == ",".join(DATASET_COLUMNS)
    assert not (tmp_path / "dataset.csv.tmp").exists()


def test_dataset_round_trip_is_exact(tmp_path, make_dataset):
    df = make_dataset(rows=200, sessions=2, seed=5)
    save_dataset(df, tmp_path / "d.csv")
    pd.testing.assert_frame_equal(load_dataset(tmp_path / "d.csv"), df)


def test_same_dataset_writes_identical_bytes(tmp_path, linear_df):
    save_dataset(linear_df, tmp_path / "a.csv")
    save_dataset(linear_df, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_load_dataset_rejects_missing_columns(tmp_path, linear_df):
    write_csv(linear_df.drop(columns="T2"), tmp_path / "bad.csv")
    with pytest.raises(ValueError, match="T2"):
        load_dataset(tmp_path / "bad.csv")


def test_load_dataset_rejects_non_finite(tmp_path, linear_df):
    df = linear_df.copy()
    df.loc[3, "q1"] = np.nan
    write_csv(df, tmp_path / "nan.csv")
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "nan.csv")


def test_load_dataset_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope.csv")


def test_telemetry_frame():
    tick = ControlTick(0.01, np.full(3, 25.0), np.full(3, 6.0), np.full(3, 5.5), np.full(3, 0.5), np.zeros(3))
    df = telemetry_frame([tick, tick])
    assert list(df.columns) == TELEMETRY_COLUMNS
    assert df.shape == (2, 16)
    assert df["Fext1"].tolist() == [0.5, 0.5]


def test_write_csv_custom_units(tmp_path):
    write_csv(pd.DataFrame({"a": [1, 2]}), tmp_path / "x.csv", units="# units: a=count")
    assert (tmp_path / "x.csv").read_text(encoding="utf-8").startswith("# units: a=count\n")
    assert read_csv(tmp_path / "x.csv")["a"].tolist() == [1, 2]


@pytest.mark.parametrize("kind", ["lstm", "cnn"])
def test_checkpoint_round_trip(tmp_path, kind, small_train_cfg, linear_df):
    params = init_params(kind, small_train_cfg, np.random.default_rng(0))
    hyper = {"window": small_train_cfg.window, "hidden": small_train_cfg.hidden}
    history = [{"epoch": 1, "train_loss": 0.5, "train_error": 0.4, "val_error": 0.3}]
    predictor = TensionPredictor(kind, params, Normalizer.fit(linear_df), hyper, history)

    save_checkpoint(predictor, tmp_path / "p.json")
    loaded = load_checkpoint(tmp_path / "p.json")

    assert loaded.kind == kind
    assert loaded.window_length == small_train_cfg.window
    assert loaded.history == history
    for name in params:
        np.testing.assert_array_equal(loaded.params[name], params[name])
    window = np.random.default_rng(1).uniform(20, 30, size=(small_train_cfg.window, 3))
    np.testing.assert_array_equal(loaded.predict(window), predictor.predict(window))


def checkpoint_doc(tmp_path, small_train_cfg, linear_df):
    params = init_params("lstm", small_train_cfg, np.random.default_rng(0))
    predictor = TensionPredictor("lstm", params, Normalizer.fit(linear_df), {"window": 10})
    save_checkpoint(predictor, tmp_path / "p.json")
    return safe_read_json(tmp_path / "p.json")


def test_checkpoint_layout(tmp_path, small_train_cfg, linear_df):
    doc = checkpoint_doc(tmp_path, small_train_cfg, linear_df)
    assert doc["format_version"] == CHECKPOINT_FORMAT_VERSION
    assert set(doc) == {"format_version", "kind", "hyper", "normalizer", "params", "history"}
    assert doc["params"]["b_f"]["shape"] == [small_train_cfg.hidden]


@pytest.mark.parametrize("change", [
    {"format_version": 99},
    {"kind": "transformer"},
    {"params": {"b_f": {"shape": [3]}}},
    {"normalizer": {}},
])
def test_bad_checkpoint_raises(tmp_path, small_train_cfg, linear_df, change):
    doc = checkpoint_doc(tmp_path, small_train_cfg, linear_df)
    doc.update(change)
    assert safe_write_json(tmp_path / "bad.json", doc)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.json")


def test_missing_or_invalid_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "broken.json")


def test_safe_json_helpers(tmp_path):
    assert safe_read_json(tmp_path / "none.json", default={}) == {}
    assert safe_write_json(tmp_path / "sub" / "x.json", {"b": 1.0 / 3.0, "a": [1, 2]})
    text = (tmp_path / "sub" / "x.json").read_text(encoding="utf-8")
    assert list(json.loads(text)) == ["b", "a"]
    assert safe_read_json(tmp_path / "sub" / "x.json")["b"] == 1.0 / 3.0
    assert not safe_write_json(tmp_path / "y.json", {"bad": object()})
