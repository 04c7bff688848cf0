"""
Small numeric helpers shared by the sequence models, the controller and the viewer.
"""
import hashlib

import numpy as np
import pandas as pd


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def params_fingerprint(params):
    """
    Digest of a parameter dict, used to detect in-place edits between a
    forward pass and its backward pass.

    :param params: dict of numpy arrays
    :return: hex digest string
    """
    h = hashlib.blake2b(digest_size=16)
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=float)
        h.update(name.encode("utf-8"))
        h.update(str(arr.shape).encode("utf-8"))
        h.update(arr.tobytes())
    return h.hexdigest()


def format_newtons(value, digits=3):
    """
    Format a force for display.

    :param value: force in N (may be NaN)
    :param digits: decimals
    :return: string such as `2.531 N`, or an empty string for missing values
    """
    try:
        if pd.isna(value):
            return ""
        return f"{float(value):.{digits}f} N"
    except (TypeError, ValueError):
        return ""
