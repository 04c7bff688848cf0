"""
Reading and writing lab artifacts: datasets, telemetry, result tables and
model checkpoints.

CSV files start with one `# units:` comment line followed by the header row.
Floats are written at full precision and read back with the round-trip
parser, so a dataset re-read from disk is identical to the one collected.
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from constants import DATASET_COLUMNS, TELEMETRY_COLUMNS, UNITS, CHECKPOINT_FORMAT_VERSION, MODEL_KINDS
from compliance_core.errors import CheckpointError
from compliance_core.io_utils import atomic_write_text, safe_read_json, safe_write_json
from compliance_core.training import Normalizer, TensionPredictor


def units_line(columns):
    """
    Build the `# units:` comment for a set of columns.

    Columns are matched to `UNITS` by their alphabetic prefix (`q1` -> `q`).

    :param columns: column names
    :return: comment line without trailing newline
    """
    parts = []
    for col in columns:
        prefix = col.rstrip("0123456789")
        if prefix in UNITS:
            parts.append(f"{col}={UNITS[prefix]}")
    return "# units: " + ", ".join(parts)


def write_csv(df, path, units=None):
    """
    Write a DataFrame as CSV atomically.

    :param df: DataFrame to write
    :param path: destination Path
    :param units: optional units comment; derived from the columns when omitted
    :return: Path written
    """
    path = Path(path)
    line = units if units is not None else units_line(df.columns)
    atomic_write_text(path, line + "\n" + df.to_csv(index=False, lineterminator="\n"))
    logging.info("Wrote %d rows to %s", len(df), path)
    return path


def read_csv(path):
    """
    Read a CSV written by `write_csv`.

    :param path: Path to the file
    :raises FileNotFoundError: if the file does not exist
    :return: DataFrame
    """
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def save_dataset(df, path):
    """
    Write a collected dataset with the fixed column order.

    :param df: dataset DataFrame
    :param path: destination Path
    :return: Path written
    """
    return write_csv(df[DATASET_COLUMNS], path)


def load_dataset(path):
    """
    Load a dataset CSV and check its schema.

    :param path: Path to the dataset
    :raises FileNotFoundError: if the file does not exist
    :raises ValueError: on missing columns or non-finite values
    :return: DataFrame with columns `DATASET_COLUMNS`
    """
    df = read_csv(path)
    missing = [c for c in DATASET_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"Dataset {path} is missing columns {missing}")
    df = df[DATASET_COLUMNS].copy()
    if not np.all(np.isfinite(df.drop(columns="session").to_numpy(dtype=float))):
        raise ValueError(f"Dataset {path} contains non-finite values")
    df["session"] = df["session"].astype(int)
    return df


def telemetry_frame(ticks):
    """
    Tabulate controller ticks.

    :param ticks: iterable of `ControlTick`
    :return: DataFrame with `TELEMETRY_COLUMNS`
    """
    rows = [tick.as_row() for tick in ticks]
    return pd.DataFrame(rows, columns=TELEMETRY_COLUMNS)


def save_checkpoint(predictor, path):
    """
    Write a predictor as a versioned JSON checkpoint.

    Layout: `format_version`, `kind`, `hyper`, `normalizer`,
    `params` (name -> {shape, data}) and `history`.

    :param predictor: `TensionPredictor`
    :param path: destination Path
    :raises CheckpointError: if the file cannot be written
    :return: Path written
    """
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": predictor.kind,
        "hyper": predictor.hyper,
        "normalizer": predictor.normalizer.to_dict(),
        "params": {
            name: {"shape": list(arr.shape), "data": np.asarray(arr, dtype=float).ravel().tolist()}
            for name, arr in predictor.params.items()
        },
        "history": predictor.history,
    }
    if not safe_write_json(path, doc):
        raise CheckpointError(f"Failed to write checkpoint {path}")
    logging.info("Saved %s checkpoint to %s", predictor.kind, path)
    return Path(path)


def load_checkpoint(path):
    """
    Load a predictor from a JSON checkpoint.

    :param path: Path to the checkpoint
    :raises CheckpointError: if the file is missing, malformed or of an unknown version
    :return: `TensionPredictor`
    """
    doc = safe_read_json(path)
    if not isinstance(doc, dict):
        raise CheckpointError(f"Checkpoint {path} is missing or not valid JSON")
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint {path} has unsupported format_version {version!r}")
    try:
        kind = doc["kind"]
        if kind not in MODEL_KINDS:
            raise CheckpointError(f"Checkpoint {path} has unknown model kind {kind!r}")
        params = {
            name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
        return TensionPredictor(
            kind,
            params,
            Normalizer.from_dict(doc["normalizer"]),
            doc["hyper"],
            doc.get("history", []),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Checkpoint {path} is malformed: {e}") from e
