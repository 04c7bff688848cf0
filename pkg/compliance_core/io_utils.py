"""
File helpers shared by every command that writes artifacts.

Datasets, checkpoints and reports all go through `atomic_write_text`, so a
crashed or interrupted run leaves either the previous file or the new one.
"""
import json
import os
import logging
from pathlib import Path

import numpy as np

from constants import DATA_DIR, OUTPUT_DIR, CHECKPOINT_DIR


def ensure_project_dirs():
    """Create the data, checkpoint and output directories."""
    for d in (DATA_DIR, CHECKPOINT_DIR, OUTPUT_DIR):
        Path(d).mkdir(parents=True, exist_ok=True)


def _numpy_default(obj):
    # json only knows Python scalars
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def safe_read_json(path, default=None):
    """
    Load a JSON artifact.

    A missing or unparsable file returns `default`; callers that need the
    document (checkpoint loading) turn that into their own error.

    :param path: JSON file
    :param default: returned when the file cannot be read
    :return: parsed document or `default`
    """
    path = Path(path)
    if not path.is_file():
        return default
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        logging.warning("Ignoring malformed JSON in %s: %s", path, e)
    except (OSError, UnicodeDecodeError) as e:
        logging.warning("Could not read %s: %s", path, e)
    return default


def atomic_write_text(path, text):
    """
    Replace `path` with `text` in one step.

    :param path: destination file, parent directories are created
    :param text: full file contents, written with "\\n" line endings
    :raises OSError: if the file cannot be written
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def safe_write_json(path, data):
    """
    Write a report or checkpoint document.

    Numpy scalars and arrays are converted to plain JSON values. Keys keep
    their insertion order and floats keep full precision, so equal inputs
    give byte-identical files.

    :param path: destination file
    :param data: JSON-compatible document
    :return: True on success, False if the document or the file was rejected
    """
    try:
        text = json.dumps(data, indent=2, default=_numpy_default)
    except (TypeError, ValueError) as e:
        logging.warning("Cannot serialize %s: %s", path, e)
        return False
    try:
        atomic_write_text(path, text + "\n")
    except OSError as e:
        logging.warning("Failed to write %s: %s", path, e)
        return False
    return True
