"""
Training and evaluation of the tension predictors.

Holds the pieces shared by the LSTM and the CNN: MSE loss, per-channel
normalization, session-aware window extraction, the classical momentum SGD
step, a central-difference gradient oracle, the epoch loop and the mean
absolute error metric. `TensionPredictor` bundles a trained model with its
normalization so callers work in mm and N.
"""
import logging
from dataclasses import dataclass

import numpy as np

from constants import Q_COLUMNS, T_COLUMNS, MODEL_KINDS
from compliance_core.errors import (
    NonFiniteError, ReceptiveFieldError, ShapeMismatchError, TrainingDivergedError,
)
from compliance_core.lstm import init_lstm_params, lstm_forward, lstm_backward
from compliance_core.cnn import init_cnn_params, cnn_forward, cnn_backward, receptive_field

EVAL_CHUNK = 512


def mse_loss(pred, target):
    """
    Mean of the squared componentwise error.

    :param pred: predictions, any shape
    :param target: targets, same shape
    :return: float >= 0
    """
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(diff ** 2))


def mse_grad(pred, target):
    """Gradient of `mse_loss` w.r.t. `pred`."""
    pred = np.asarray(pred, dtype=float)
    return 2.0 * (pred - np.asarray(target, dtype=float)) / pred.size


def relative_error(a, b):
    """
    Relative error ||a - b|| / (||a|| + ||b||); 0 when both are zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


@dataclass
class Normalizer:
    """Per-channel z-score statistics of commands (mm) and tensions (N)."""

    q_mean: np.ndarray
    q_std: np.ndarray
    t_mean: np.ndarray
    t_std: np.ndarray

    @classmethod
    def fit(cls, df):
        """
        Compute statistics from a dataset split.

        Channels with zero spread get a unit scale.

        :param df: DataFrame with `q1..q3` and `T1..T3` columns
        :return: `Normalizer`
        """
        q = df[Q_COLUMNS].to_numpy(dtype=float)
        t = df[T_COLUMNS].to_numpy(dtype=float)
        q_std = q.std(axis=0)
        t_std = t.std(axis=0)
        return cls(
            q_mean=q.mean(axis=0),
            q_std=np.where(q_std > 0, q_std, 1.0),
            t_mean=t.mean(axis=0),
            t_std=np.where(t_std > 0, t_std, 1.0),
        )

    def normalize_q(self, q):
        return (np.asarray(q, dtype=float) - self.q_mean) / self.q_std

    def normalize_t(self, t):
        return (np.asarray(t, dtype=float) - self.t_mean) / self.t_std

    def denormalize_t(self, z):
        return np.asarray(z, dtype=float) * self.t_std + self.t_mean

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("q_mean", "q_std", "t_mean", "t_std")}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: np.asarray(data[k], dtype=float) for k in ("q_mean", "q_std", "t_mean", "t_std")})


def build_windows(df, n):
    """
    End indices of every length-`n` window that stays inside one session.

    :param df: dataset DataFrame (time-ordered, with a `session` column)
    :param n: window length in ticks
    :return: int array of row indices; the window ending at `e` covers rows e-n+1..e
    """
    if n < 1:
        raise ValueError("window length must be >= 1")
    sessions = df["session"].to_numpy()
    if len(sessions) == 0:
        return np.zeros(0, dtype=int)
    idx = np.arange(len(sessions))
    boundary = np.r_[True, sessions[1:] != sessions[:-1]]
    run_start = np.maximum.accumulate(np.where(boundary, idx, 0))
    return idx[idx - run_start >= n - 1]


def gather_windows(q, ends, n):
    """
    Stack newest-first windows of `q` ending at `ends`.

    :param q: (rows, 3) commands
    :param ends: window end indices
    :param n: window length
    :return: (len(ends), n, 3) array, row 0 of each window is the newest tick
    """
    return q[np.asarray(ends)[:, None] - np.arange(n)[None, :]]


def window_targets(t, ends):
    """Tension recorded in the frame that followed the newest command of each window."""
    return t[np.asarray(ends)]


def forward(kind, params, windows):
    """Dispatch a forward pass to the LSTM or the CNN."""
    if kind == "lstm":
        return lstm_forward(params, windows)
    if kind == "cnn":
        return cnn_forward(params, windows)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def backward(cache, loss_grad):
    """
    Gradients of the loss w.r.t. every parameter.

    :param cache: cache from `forward`
    :param loss_grad: gradient of the loss w.r.t. the forward output
    :return: dict of gradients shaped like the parameters
    """
    if cache["kind"] == "lstm":
        return lstm_backward(cache, loss_grad)
    return cnn_backward(cache, loss_grad)


def init_params(kind, cfg, rng):
    """
    Fresh parameters for `kind` sized by a `TrainConfig`.

    :raises ReceptiveFieldError: if a CNN cannot see a full window of `cfg.window`
    """
    if kind == "lstm":
        return init_lstm_params(cfg.hidden, cfg.fc_size, rng=rng)
    if kind == "cnn":
        rf = receptive_field(cfg.cnn_layers, cfg.cnn_kernel)
        if cfg.window < rf + 1:
            raise ReceptiveFieldError(
                f"CNN with L={cfg.cnn_layers}, k={cfg.cnn_kernel} has a receptive field of {rf} ticks "
                f"and needs windows of at least {rf + 1}, got {cfg.window}"
            )
        return init_cnn_params(cfg.cnn_kernel, cfg.cnn_filters, cfg.cnn_layers, cfg.fc_size, rng=rng)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def sgd_momentum_step(params, grads, velocity, cfg):
    """
    Classical (heavy-ball) momentum update.

    v <- momentum * v + grad; theta <- theta - learning_rate * v

    :param params: dict of parameter arrays
    :param grads: dict of gradients with the same keys and shapes
    :param velocity: dict of momentum buffers, or None for zero buffers
    :param cfg: `TrainConfig` (learning_rate, momentum)
    :raises ShapeMismatchError: if a gradient does not match its parameter
    :raises NonFiniteError: if a gradient is not finite
    :return: tuple (new params, new velocity)
    """
    new_params, new_velocity = {}, {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=float)
        if g.shape != theta.shape:
            raise ShapeMismatchError(f"gradient {name} has shape {g.shape}, parameter has {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
        v_prev = np.zeros_like(theta) if velocity is None else velocity[name]
        v = cfg.momentum * v_prev + g
        new_velocity[name] = v
        new_params[name] = theta - cfg.learning_rate * v
    return new_params, new_velocity


def numerical_gradient(fn, theta, eps=1e-5):
    """
    Central-difference gradient of a scalar function of one array.

    :param fn: callable taking an array shaped like `theta` and returning a float
    :param theta: point of evaluation
    :param eps: step
    :return: array shaped like `theta`
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    theta = np.array(theta, dtype=float)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    g_flat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = fn(theta)
        flat[i] = orig - eps
        minus = fn(theta)
        flat[i] = orig
        g_flat[i] = (plus - minus) / (2.0 * eps)
    return grad


def finite_diff_grad(params, windows, targets, eps=1e-5, kind="lstm"):
    """
    Central-difference gradients of the MSE loss for every parameter.

    :param params: dict of parameter arrays (not modified)
    :param windows: normalized windows fed to `forward`
    :param targets: normalized targets
    :param eps: perturbation per scalar parameter
    :param kind: `lstm` or `cnn`
    :return: dict of gradients shaped like the parameters
    """
    grads = {}
    for name in params:
        def loss_at(value, name=name):
            trial = dict(params)
            trial[name] = value
            return mse_loss(forward(kind, trial, windows)[0], targets)

        grads[name] = numerical_gradient(loss_at, params[name], eps)
    return grads


def gradient_check(params, windows, targets, eps=1e-5, kind="lstm"):
    """
    Compare analytic and central-difference gradients.

    :return: tuple (max relative error over parameter arrays, dict of per-array errors)
    """
    out, cache = forward(kind, params, windows)
    analytic = backward(cache, mse_grad(out, targets))
    numeric = finite_diff_grad(params, windows, targets, eps, kind)
    errors = {name: relative_error(analytic[name], numeric[name]) for name in params}
    return max(errors.values()), errors


class TensionPredictor:
    """
    Trained sequence model with its normalization, working in mm and N.

    :param kind: `lstm` or `cnn`
    :param params: parameter dict
    :param normalizer: `Normalizer` fitted on the training split
    :param hyper: dict of hyperparameters (at least `window`)
    :param history: per-epoch training history
    """

    def __init__(self, kind, params, normalizer, hyper, history=None):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        self.kind = kind
        self.params = params
        self.normalizer = normalizer
        self.hyper = dict(hyper)
        self.history = list(history or [])

    @property
    def window_length(self):
        return int(self.hyper["window"])

    def predict_normalized(self, windows):
        """Forward pass on normalized windows; returns normalized output."""
        return forward(self.kind, self.params, windows)[0]

    def predict(self, window_mm):
        """
        Predict internal tension from raw command windows.

        :param window_mm: (n, 3) or (B, n, 3) commanded positions in mm, newest first
        :return: (3,) or (B, 3) tensions in N
        """
        z = self.predict_normalized(self.normalizer.normalize_q(window_mm))
        return self.normalizer.denormalize_t(z)


def _strided(ends, limit):
    if limit is None or len(ends) <= limit:
        return ends
    return ends[np.linspace(0, len(ends) - 1, limit).astype(int)]


def evaluate(predictor, df, max_windows=None):
    """
    Mean absolute error averaged over the three cables, in N.

    :param predictor: `TensionPredictor`
    :param df: dataset split
    :param max_windows: optional cap; windows are then taken at an even stride
    :raises ValueError: if the split holds no complete window
    :return: float
    """
    n = predictor.window_length
    ends = _strided(build_windows(df, n), max_windows)
    if len(ends) == 0:
        raise ValueError(f"dataset has no complete window of {n} ticks")
    q = df[Q_COLUMNS].to_numpy(dtype=float)
    t = df[T_COLUMNS].to_numpy(dtype=float)

    total = 0.0
    for start in range(0, len(ends), EVAL_CHUNK):
        chunk = ends[start:start + EVAL_CHUNK]
        pred = predictor.predict(gather_windows(q, chunk, n))
        total += float(np.abs(pred - window_targets(t, chunk)).sum())
    return total / (len(ends) * len(T_COLUMNS))


def train(model_kind, train_df, val_df, cfg):
    """
    Fit a predictor with minibatch SGD and momentum.

    Each epoch draws `windows_per_epoch` random windows (none straddling a
    session boundary), shuffles them into batches and records train and
    validation mean error on fixed strided subsets. Deterministic given
    `cfg.rng_seed`.

    :param model_kind: `lstm` or `cnn`; None uses `cfg.model_kind`
    :param train_df: training split
    :param val_df: validation split
    :param cfg: `TrainConfig`
    :raises ValueError: if either split holds no complete window
    :raises TrainingDivergedError: if the loss becomes non-finite
    :return: tuple (`TensionPredictor`, history list)
    """
    kind = model_kind or cfg.model_kind
    n = cfg.window
    rng = np.random.default_rng(cfg.rng_seed)
    params = init_params(kind, cfg, rng)

    normalizer = Normalizer.fit(train_df)
    q = normalizer.normalize_q(train_df[Q_COLUMNS].to_numpy(dtype=float))
    t = normalizer.normalize_t(train_df[T_COLUMNS].to_numpy(dtype=float))
    ends = build_windows(train_df, n)
    if len(ends) == 0:
        raise ValueError(f"training split has no complete window of {n} ticks")
    if len(build_windows(val_df, n)) == 0:
        raise ValueError(f"validation split has no complete window of {n} ticks")

    hyper = {
        "window": n, "hidden": cfg.hidden, "fc_size": cfg.fc_size,
        "cnn_layers": cfg.cnn_layers, "cnn_kernel": cfg.cnn_kernel, "cnn_filters": cfg.cnn_filters,
        "learning_rate": cfg.learning_rate, "momentum": cfg.momentum,
        "batch_size": cfg.batch_size, "epochs": cfg.epochs, "rng_seed": cfg.rng_seed,
    }
    predictor = TensionPredictor(kind, params, normalizer, hyper)
    velocity = None
    history = []
    logging.info("Training %s on %d windows (n=%d, %d epochs)", kind, len(ends), n, cfg.epochs)

    for epoch in range(cfg.epochs):
        replace = len(ends) < cfg.windows_per_epoch
        picked = rng.choice(ends, size=cfg.windows_per_epoch, replace=replace)
        losses = []
        for start in range(0, len(picked), cfg.batch_size):
            batch = picked[start:start + cfg.batch_size]
            windows = gather_windows(q, batch, n)
            targets = window_targets(t, batch)
            try:
                out, cache = forward(kind, params, windows)
                loss = mse_loss(out, targets)
                if not np.isfinite(loss):
                    raise NonFiniteError("non-finite loss")
                grads = backward(cache, mse_grad(out, targets))
                params, velocity = sgd_momentum_step(params, grads, velocity, cfg)
            except NonFiniteError as e:
                logging.error("Training diverged in epoch %d: %s", epoch, e)
                raise TrainingDivergedError(epoch, float("nan")) from e
            losses.append(loss)

        predictor.params = params
        record = {
            "epoch": epoch + 1,
            "train_loss": float(np.mean(losses)),
            "train_error": evaluate(predictor, train_df, cfg.eval_windows),
            "val_error": evaluate(predictor, val_df, cfg.eval_windows),
        }
        if not all(np.isfinite(v) for v in record.values()):
            logging.error("Training diverged in epoch %d (loss=%s)", epoch, record["train_loss"])
            raise TrainingDivergedError(epoch, record["train_loss"])
        history.append(record)
        logging.info(
            "epoch %d/%d loss=%.5f train=%.4f N val=%.4f N",
            record["epoch"], cfg.epochs, record["train_loss"], record["train_error"], record["val_error"],
        )

    predictor.history = history
    return predictor, history
