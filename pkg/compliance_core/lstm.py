"""
LSTM tension predictor.

A single LSTM layer unrolled over the command window, followed by a linear
32-neuron layer and a linear 3-output head. Gate weights are kept as named
arrays (`W_qi`, `W_hi`, ... ) and stacked per call, so forward and backward
work on one (4N, ·) matrix per step.

Windows arrive newest-first; the network consumes them oldest to newest from
h = c = 0. Everything runs in float64.
"""
import numpy as np

from compliance_core.errors import NonFiniteError, ShapeMismatchError, StaleCacheError
from compliance_core.utils import params_fingerprint, sigmoid

GATES = ("i", "f", "o", "c")


def init_lstm_params(hidden, fc_size=32, n_inputs=3, n_outputs=3, rng=None):
    """
    Initialise LSTM parameters.

    Weights are uniform in +/- 1/sqrt(fan-in); the forget-gate bias starts at 1
    and every other bias at 0.

    :param hidden: number of hidden units N
    :param fc_size: width of the linear layer before the output head
    :param n_inputs: input channels (cables)
    :param n_outputs: output channels (cables)
    :param rng: numpy Generator
    :return: dict of named parameter arrays
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    gate_bound = 1.0 / np.sqrt(n_inputs + hidden)
    p = {}
    for g in GATES:
        p[f"W_q{g}"] = rng.uniform(-gate_bound, gate_bound, (hidden, n_inputs))
        p[f"W_h{g}"] = rng.uniform(-gate_bound, gate_bound, (hidden, hidden))
    for g in GATES:
        p[f"b_{g}"] = np.ones(hidden) if g == "f" else np.zeros(hidden)
    p["W_fc"] = rng.uniform(-1.0 / np.sqrt(hidden), 1.0 / np.sqrt(hidden), (fc_size, hidden))
    p["b_fc"] = np.zeros(fc_size)
    p["W_out"] = rng.uniform(-1.0 / np.sqrt(fc_size), 1.0 / np.sqrt(fc_size), (n_outputs, fc_size))
    p["b_out"] = np.zeros(n_outputs)
    return p


def _stacked(p):
    W_q = np.concatenate([p[f"W_q{g}"] for g in GATES], axis=0)
    W_h = np.concatenate([p[f"W_h{g}"] for g in GATES], axis=0)
    b = np.concatenate([p[f"b_{g}"] for g in GATES])
    return W_q, W_h, b


def _check_shapes(p, n_inputs):
    hidden = p["W_hi"].shape[0]
    for g in GATES:
        if p[f"W_q{g}"].shape != (hidden, n_inputs):
            raise ShapeMismatchError(f"W_q{g} has shape {p[f'W_q{g}'].shape}, expected {(hidden, n_inputs)}")
        if p[f"W_h{g}"].shape != (hidden, hidden):
            raise ShapeMismatchError(f"W_h{g} has shape {p[f'W_h{g}'].shape}, expected {(hidden, hidden)}")
        if p[f"b_{g}"].shape != (hidden,):
            raise ShapeMismatchError(f"b_{g} has shape {p[f'b_{g}'].shape}, expected {(hidden,)}")
    if p["W_fc"].shape[1] != hidden or p["W_out"].shape[1] != p["W_fc"].shape[0]:
        raise ShapeMismatchError("fully-connected head does not match the hidden size")
    return hidden


def lstm_cell(p, q_t, h_prev, c_prev):
    """
    One LSTM step.

    i, f, o = sigmoid(W_q q_t + W_h h_prev + b), g = tanh(...),
    c = f * c_prev + i * g, h = o * tanh(c).

    :param p: parameter dict
    :param q_t: input, shape (3,) or (B, 3)
    :param h_prev: previous hidden state, shape (N,) or (B, N)
    :param c_prev: previous cell state, shape (N,) or (B, N)
    :raises ShapeMismatchError: on inconsistent shapes
    :return: tuple (h, c)
    """
    q_t = np.asarray(q_t, dtype=float)
    hidden = _check_shapes(p, q_t.shape[-1])
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    if h_prev.shape[-1] != hidden or c_prev.shape != h_prev.shape:
        raise ShapeMismatchError(f"state shapes {h_prev.shape}/{c_prev.shape} do not match hidden size {hidden}")

    W_q, W_h, b = _stacked(p)
    z = q_t @ W_q.T + h_prev @ W_h.T + b
    ifo = sigmoid(z[..., :3 * hidden])
    g = np.tanh(z[..., 3 * hidden:])
    i, f, o = ifo[..., :hidden], ifo[..., hidden:2 * hidden], ifo[..., 2 * hidden:]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def lstm_forward(p, windows):
    """
    Unroll the LSTM over newest-first windows and apply the linear head.

    :param p: parameter dict
    :param windows: (n, 3) or (B, n, 3) normalized command windows, newest first
    :raises NonFiniteError: if an activation becomes non-finite (reports the step)
    :return: tuple (output, cache); output is (3,) or (B, 3) in normalized units
    """
    windows = np.asarray(windows, dtype=float)
    single = windows.ndim == 2
    if single:
        windows = windows[None]
    if windows.ndim != 3:
        raise ShapeMismatchError(f"windows must be (n, 3) or (B, n, 3), got {windows.shape}")

    hidden = _check_shapes(p, windows.shape[2])
    W_q, W_h, b = _stacked(p)
    x = windows[:, ::-1, :]
    batch, n, _ = x.shape

    hs = np.zeros((n + 1, batch, hidden))
    cs = np.zeros((n + 1, batch, hidden))
    ifo = np.zeros((n, batch, 3 * hidden))
    gs = np.zeros((n, batch, hidden))
    tanh_c = np.zeros((n, batch, hidden))

    for t in range(n):
        z = x[:, t, :] @ W_q.T + hs[t] @ W_h.T + b
        ifo[t] = sigmoid(z[:, :3 * hidden])
        gs[t] = np.tanh(z[:, 3 * hidden:])
        cs[t + 1] = ifo[t, :, hidden:2 * hidden] * cs[t] + ifo[t, :, :hidden] * gs[t]
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = ifo[t, :, 2 * hidden:] * tanh_c[t]
        if not np.all(np.isfinite(cs[t + 1])):
            raise NonFiniteError("non-finite LSTM activation", step=t)

    fc = hs[n] @ p["W_fc"].T + p["b_fc"]
    out = fc @ p["W_out"].T + p["b_out"]
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite LSTM output", step=n)

    cache = {
        "kind": "lstm",
        "params": p,
        "fingerprint": params_fingerprint(p),
        "single": single,
        "x": x,
        "hs": hs,
        "cs": cs,
        "ifo": ifo,
        "gs": gs,
        "tanh_c": tanh_c,
        "fc": fc,
    }
    return (out[0] if single else out), cache


def lstm_backward(cache, dout):
    """
    Backpropagation through time.

    :param cache: cache returned by `lstm_forward`
    :param dout: gradient of the loss w.r.t. the output, same shape as the output
    :raises StaleCacheError: if the parameters changed since the forward pass
    :return: dict of gradients with the same names and shapes as the parameters
    """
    p = cache["params"]
    if params_fingerprint(p) != cache["fingerprint"]:
        raise StaleCacheError("parameters changed after the forward pass")

    dout = np.asarray(dout, dtype=float)
    if cache["single"]:
        dout = dout[None]

    x, hs, cs = cache["x"], cache["hs"], cache["cs"]
    ifo, gs, tanh_c = cache["ifo"], cache["gs"], cache["tanh_c"]
    n = x.shape[1]
    hidden = hs.shape[2]
    W_q, W_h, _ = _stacked(p)

    grads = {
        "W_out": dout.T @ cache["fc"],
        "b_out": dout.sum(axis=0),
    }
    dfc = dout @ p["W_out"]
    grads["W_fc"] = dfc.T @ hs[n]
    grads["b_fc"] = dfc.sum(axis=0)

    dW_q = np.zeros_like(W_q)
    dW_h = np.zeros_like(W_h)
    db = np.zeros(4 * hidden)
    dh = dfc @ p["W_fc"]
    dc = np.zeros_like(dh)

    for t in reversed(range(n)):
        i = ifo[t, :, :hidden]
        f = ifo[t, :, hidden:2 * hidden]
        o = ifo[t, :, 2 * hidden:]
        g = gs[t]

        do = dh * tanh_c[t]
        dc = dc + dh * o * (1.0 - tanh_c[t] ** 2)
        di = dc * g
        df = dc * cs[t]
        dg = dc * i

        dz = np.concatenate([
            np.concatenate([di, df, do], axis=1) * ifo[t] * (1.0 - ifo[t]),
            dg * (1.0 - g ** 2),
        ], axis=1)

        dW_q += dz.T @ x[:, t, :]
        dW_h += dz.T @ hs[t]
        db += dz.sum(axis=0)

        dh = dz @ W_h
        dc = dc * f

    for k, g in enumerate(GATES):
        rows = slice(k * hidden, (k + 1) * hidden)
        grads[f"W_q{g}"] = dW_q[rows]
        grads[f"W_h{g}"] = dW_h[rows]
        grads[f"b_{g}"] = db[rows]
    return {name: grads[name] for name in p}
