"""
UI utilities for locating, loading and shaping lab results.

Every helper here reads the CSV/JSON files written by the command-line
pipeline; the viewer never runs a simulation itself.
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import streamlit as st

from constants import OUTPUT_DIR
from compliance_core import pipeline
from compliance_core.data_io import read_csv
from compliance_core.io_utils import safe_read_json
from compliance_core.tipcal import CALIBRATION_COLUMNS

RESULT_FILES = {
    "Training": [pipeline.HISTORY_FILE, pipeline.EVAL_FILE],
    "Architecture Comparison": [pipeline.COMPARE_GRID_FILE, pipeline.COMPARE_SEEDS_FILE],
    "Rate Statics": [pipeline.RATE_STATICS_FILE],
    "Impulse Response": [pipeline.IMPULSE_TRACES_FILE, pipeline.IMPULSE_SUMMARY_FILE, pipeline.IMPULSE_TELEMETRY_FILE,
                         pipeline.IMPULSE_MEAN_FILE, pipeline.IMPULSE_REPORT_FILE],
    "Insertion": [pipeline.INSERT_TRACES_FILE, pipeline.INSERT_ABLATION_FILE, pipeline.INSERT_TELEMETRY_FILE,
                  pipeline.INSERT_HISTOGRAM_FILE, pipeline.INSERT_REPORT_FILE],
    "Calibration": [pipeline.CALIBRATION_FILE, pipeline.CALIBRATION_REPORT_FILE],
}


def get_output_dir_options(root=OUTPUT_DIR):
    """
    Directories under `root` (itself included) that hold at least one result file.

    :param root: base output directory
    :return: list of directory paths as strings, `root` first
    """
    root = Path(root)
    if not root.is_dir():
        return []
    known = {name for names in RESULT_FILES.values() for name in names}
    candidates = [root, *sorted(p for p in root.iterdir() if p.is_dir())]
    return [str(d) for d in candidates if any((d / name).exists() for name in known)]


def available_views(out_dir):
    """Views with at least their first result file present in `out_dir`."""
    out_dir = Path(out_dir)
    return [view for view, names in RESULT_FILES.items() if (out_dir / names[0]).exists()]


@st.cache_data(show_spinner=False)
def _read_csv_cached(path, mtime):
    return read_csv(Path(path))


def load_result_csv(out_dir, name):
    """
    Read one result CSV, cached until the file changes.

    :param out_dir: results directory
    :param name: file name
    :return: DataFrame, or `None` when missing or unreadable
    """
    path = Path(out_dir) / name
    if not path.exists():
        return None
    try:
        return _read_csv_cached(str(path), path.stat().st_mtime)
    except (OSError, ValueError, pd.errors.ParserError):
        logging.exception("Failed to read %s", path)
        return None


def load_result_json(out_dir, name):
    """Read one result JSON; `None` when missing or invalid."""
    return safe_read_json(Path(out_dir) / name, default=None)


def prepare_history_df(history):
    """
    Long-form training history for plotting.

    :param history: DataFrame with epoch, train_error, val_error
    :return: DataFrame with epoch, split, error
    """
    cols = [c for c in ("train_error", "val_error") if c in history.columns]
    long = history.melt(id_vars="epoch", value_vars=cols, var_name="split", value_name="error")
    long["split"] = long["split"].str.replace("_error", "", regex=False)
    return long


def prepare_compare_table(grid):
    """
    Pivot the comparison grid into model rows by window-length columns.

    Cells read "mean +/- std" in N; infeasible cells show their error text.

    :param grid: DataFrame with kind, size, window, mean_error, std_error, error
    :return: display DataFrame
    """
    df = grid.copy()
    df["model"] = df["kind"].str.upper() + "-" + df["size"].astype(int).astype(str)
    error = df["error"].fillna("").astype(str) if "error" in df.columns else ""

    def cell(row):
        if np.isnan(row.mean_error):
            return "n/a"
        std = 0.0 if np.isnan(row.std_error) else row.std_error
        return f"{row.mean_error:.3f} +/- {std:.3f}"

    df["cell"] = [cell(r) for r in df.itertuples()]
    df.loc[(df["mean_error"].isna()) & (error != ""), "cell"] = "infeasible"
    table = df.pivot(index="model", columns="window", values="cell")
    table.columns = [f"n={int(c)}" for c in table.columns]
    return table.reset_index().rename(columns={"model": "Model"})


def prepare_calibration_df(table):
    """
    Calibration trials with fitted-minus-applied residuals.

    :param table: DataFrame with `CALIBRATION_COLUMNS`
    :return: copy with Fx_residual, Fy_residual, F_applied_N columns added
    """
    missing = [c for c in CALIBRATION_COLUMNS if c not in table.columns]
    if missing:
        raise ValueError(f"Calibration table is missing columns {missing}")
    df = table.copy()
    df["Fx_residual"] = df["Fx_fit"] - df["Fx_applied"]
    df["Fy_residual"] = df["Fy_fit"] - df["Fy_applied"]
    df["F_applied_N"] = np.hypot(df["Fx_applied"], df["Fy_applied"])
    return df


def get_trial_options(trials):
    """Trial numbers from the impulse summary, in order."""
    if trials is None or trials.empty:
        return []
    return sorted(int(t) for t in trials["trial"].unique())
