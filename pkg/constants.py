"""
Centralised constants and configuration defaults for the compliance lab.

This module centralises file paths, platform rates and limits, CSV schemas and
the fixed matrices shared by the simulator, explorer and calibration code.
Keep this file small and declarative so it is safe to import from many places.
"""
import math
from pathlib import Path

import numpy as np

# File paths and directories
PROJECT_ROOT = Path.cwd()

DATA_DIR = PROJECT_ROOT / "data"
OUTPUT_DIR = PROJECT_ROOT / "output"
CHECKPOINT_DIR = DATA_DIR / "checkpoints"

DEFAULT_CONFIG_FILE = PROJECT_ROOT / "lab.toml"
DATASET_FILE = DATA_DIR / "dataset.csv"
CHECKPOINT_FILE = CHECKPOINT_DIR / "predictor.json"

# Platform rates and limits
SAMPLE_RATE_FAST = 20000
CONTROL_RATE = 100
CONTROL_DT = 1.0 / CONTROL_RATE
ACTUATION_RANGE_MM = 63.0
FORCE_CAP_N = 65.0
N_CABLES = 3

# Sensor filter y[n] = (255/256) y[n-1] + (1/256) x[n]
FILTER_KEEP = 255.0 / 256.0
FILTER_GAIN = 1.0 / 256.0

# Tip calibration
GRAVITY = 9.81
COIN_MASS_KG = 0.009
REFERENCE_ALPHA = 1.0 / 3.04

# Rows 1-2 of the (x, y, c) transform; also the tip-plane projection matrix.
# Column i is the unit direction of cable i in the tip plane.
_S3 = math.sqrt(3.0) / 2.0
TIP_PLANE_MATRIX = np.array([
    [0.0, -_S3, _S3],
    [1.0, -0.5, -0.5],
])

XYC_MATRIX = np.vstack([TIP_PLANE_MATRIX, np.ones(3)])

# Closed-form inverse: rows 1-2 are orthogonal to (1, 1, 1) with squared norm 3/2
XYC_INVERSE = np.column_stack([
    (2.0 / 3.0) * TIP_PLANE_MATRIX[0],
    (2.0 / 3.0) * TIP_PLANE_MATRIX[1],
    np.full(3, 1.0 / 3.0),
])

# CSV schemas
DATASET_COLUMNS = ["t", "q1", "q2", "q3", "T1", "T2", "T3", "session"]
Q_COLUMNS = ["q1", "q2", "q3"]
T_COLUMNS = ["T1", "T2", "T3"]

TELEMETRY_COLUMNS = [
    "t",
    "q1", "q2", "q3",
    "T1", "T2", "T3",
    "Fint1", "Fint2", "Fint3",
    "Fext1", "Fext2", "Fext3",
    "v1", "v2", "v3",
]

UNITS = {
    "t": "s",
    "q": "mm",
    "T": "N",
    "Fint": "N",
    "Fext": "N",
    "v": "mm/s",
}

# Checkpoint container
CHECKPOINT_FORMAT_VERSION = 1
MODEL_KINDS = ("lstm", "cnn")

# Architecture comparison grid
COMPARE_KINDS = ["lstm", "cnn"]
COMPARE_SIZES = [32, 64]
COMPARE_WINDOWS = [100, 200]

# Insertion exceedance thresholds (N)
EXCEEDANCE_THRESHOLDS = [4.0, 5.0, 6.0, 7.0, 8.0]

# Plotly configuration for the results viewer
CONFIG = {
    "scrollZoom": True,
    "displayModeBar": True,
    "modeBarButtonsToRemove": ["zoomIn2d", "zoomOut2d", "select2d", "lasso2d"]
}

# Results viewer
APP_TITLE = "Compliance Lab Results"
RESULT_VIEWS = [
    "Training",
    "Architecture Comparison",
    "Rate Statics",
    "Impulse Response",
    "Insertion",
    "Calibration",
]
