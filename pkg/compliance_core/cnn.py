"""
Temporal CNN baseline for tension prediction.

`layers` valid (unpadded, stride 1) convolutions along time, each followed by
ReLU, then a global max-pool over time per channel, a linear 32-neuron layer
and a linear 3-output head. Convolutions are computed as im2col matrix
products over `sliding_window_view`.

The receptive field of the stack is layers * (kernel - 1) + 1 ticks; shorter
windows are rejected.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from compliance_core.errors import NonFiniteError, ReceptiveFieldError, ShapeMismatchError, StaleCacheError
from compliance_core.utils import params_fingerprint


def receptive_field(layers, kernel):
    """Context length L(k - 1) covered by the conv stack (a window needs one tick more)."""
    return layers * (kernel - 1)


def init_cnn_params(kernel, filters=32, layers=3, fc_size=32, n_inputs=3, n_outputs=3, rng=None):
    """
    Initialise CNN parameters uniformly in +/- 1/sqrt(fan-in) with zero biases.

    :param kernel: temporal kernel size k
    :param filters: channels of every conv layer
    :param layers: number of conv layers L
    :param fc_size: width of the linear layer before the output head
    :param rng: numpy Generator
    :return: dict with `W_conv{l}` of shape (k, C_in, C_out), `b_conv{l}`, `W_fc`, `b_fc`, `W_out`, `b_out`
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    p = {}
    c_in = n_inputs
    for layer in range(1, layers + 1):
        bound = 1.0 / np.sqrt(kernel * c_in)
        p[f"W_conv{layer}"] = rng.uniform(-bound, bound, (kernel, c_in, filters))
        p[f"b_conv{layer}"] = np.zeros(filters)
        c_in = filters
    p["W_fc"] = rng.uniform(-1.0 / np.sqrt(filters), 1.0 / np.sqrt(filters), (fc_size, filters))
    p["b_fc"] = np.zeros(fc_size)
    p["W_out"] = rng.uniform(-1.0 / np.sqrt(fc_size), 1.0 / np.sqrt(fc_size), (n_outputs, fc_size))
    p["b_out"] = np.zeros(n_outputs)
    return p


def conv_layers(p):
    """Number of conv layers held in `p`."""
    return sum(1 for name in p if name.startswith("W_conv"))


def _im2col(a, kernel):
    # (B, T, C) -> (B, T - k + 1, k * C), tap-major
    cols = sliding_window_view(a, kernel, axis=1)
    batch, t_out, channels, _ = cols.shape
    return cols.transpose(0, 1, 3, 2).reshape(batch, t_out, kernel * channels)


def cnn_forward(p, windows):
    """
    Run the CNN over newest-first windows.

    :param p: parameter dict
    :param windows: (n, 3) or (B, n, 3) normalized command windows, newest first
    :raises ReceptiveFieldError: if n < L(k - 1) + 1
    :raises NonFiniteError: if the output is not finite
    :return: tuple (output, cache); output is (3,) or (B, 3) in normalized units
    """
    windows = np.asarray(windows, dtype=float)
    single = windows.ndim == 2
    if single:
        windows = windows[None]
    if windows.ndim != 3:
        raise ShapeMismatchError(f"windows must be (n, 3) or (B, n, 3), got {windows.shape}")

    layers = conv_layers(p)
    kernel = p["W_conv1"].shape[0]
    n = windows.shape[1]
    if n < receptive_field(layers, kernel) + 1:
        raise ReceptiveFieldError(
            f"window of {n} ticks is shorter than the receptive field "
            f"{receptive_field(layers, kernel)} + 1 (L={layers}, k={kernel})"
        )
    if p["W_conv1"].shape[1] != windows.shape[2]:
        raise ShapeMismatchError(f"W_conv1 expects {p['W_conv1'].shape[1]} channels, got {windows.shape[2]}")

    a = windows[:, ::-1, :]
    inputs, pre = [], []
    for layer in range(1, layers + 1):
        W = p[f"W_conv{layer}"]
        if W.shape[1] != a.shape[2]:
            raise ShapeMismatchError(f"W_conv{layer} expects {W.shape[1]} channels, got {a.shape[2]}")
        inputs.append(a)
        z = _im2col(a, W.shape[0]) @ W.reshape(-1, W.shape[2]) + p[f"b_conv{layer}"]
        pre.append(z)
        a = np.maximum(z, 0.0)

    argmax = np.argmax(a, axis=1)
    pooled = np.take_along_axis(a, argmax[:, None, :], axis=1)[:, 0, :]
    fc = pooled @ p["W_fc"].T + p["b_fc"]
    out = fc @ p["W_out"].T + p["b_out"]
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite CNN output", step=n)

    cache = {
        "kind": "cnn",
        "params": p,
        "fingerprint": params_fingerprint(p),
        "single": single,
        "inputs": inputs,
        "pre": pre,
        "argmax": argmax,
        "pooled": pooled,
        "fc": fc,
    }
    return (out[0] if single else out), cache


def cnn_backward(cache, dout):
    """
    Backpropagate through the head, the max-pool and the conv stack.

    :param cache: cache returned by `cnn_forward`
    :param dout: gradient of the loss w.r.t. the output
    :raises StaleCacheError: if the parameters changed since the forward pass
    :return: dict of gradients with the same names and shapes as the parameters
    """
    p = cache["params"]
    if params_fingerprint(p) != cache["fingerprint"]:
        raise StaleCacheError("parameters changed after the forward pass")

    dout = np.asarray(dout, dtype=float)
    if cache["single"]:
        dout = dout[None]

    grads = {
        "W_out": dout.T @ cache["fc"],
        "b_out": dout.sum(axis=0),
    }
    dfc = dout @ p["W_out"]
    grads["W_fc"] = dfc.T @ cache["pooled"]
    grads["b_fc"] = dfc.sum(axis=0)
    dpooled = dfc @ p["W_fc"]

    # Only the pooled tick of each channel receives gradient
    last = cache["pre"][-1]
    da = np.zeros_like(last)
    np.put_along_axis(da, cache["argmax"][:, None, :], dpooled[:, None, :], axis=1)

    for layer in reversed(range(1, len(cache["pre"]) + 1)):
        W = p[f"W_conv{layer}"]
        kernel, c_in, c_out = W.shape
        a_in = cache["inputs"][layer - 1]
        dz = da * (cache["pre"][layer - 1] > 0)
        batch, t_out, _ = dz.shape

        cols = _im2col(a_in, kernel).reshape(batch * t_out, kernel * c_in)
        dz_flat = dz.reshape(batch * t_out, c_out)
        grads[f"W_conv{layer}"] = (cols.T @ dz_flat).reshape(kernel, c_in, c_out)
        grads[f"b_conv{layer}"] = dz_flat.sum(axis=0)

        if layer > 1:
            dcols = (dz_flat @ W.reshape(-1, c_out).T).reshape(batch, t_out, kernel, c_in)
            da = np.zeros_like(a_in)
            for j in range(kernel):
                da[:, j:j + t_out, :] += dcols[:, :, j, :]

    return {name: grads[name] for name in p}
