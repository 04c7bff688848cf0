"""
Actuator-space compliant motion controller.

Every tick the controller predicts the internal tension the recent command
history should produce, treats the remainder of the measurement as external
load and moves each cable against it with a deadband-proportional velocity.
"""
import time
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from constants import ACTUATION_RANGE_MM, N_CABLES

STATUS_OK = "ok"
STATUS_WARMUP = "warmup"
STATUS_PREDICTOR_FAULT = "predictor_fault"
STATUS_OVER_BUDGET = "over_budget"
STATUS_DISABLED = "disabled"
STATUS_PLANT_FAULT = "plant_fault"

LAMBDA_FACTOR = 1.25


@dataclass
class ControlTick:
    """One tick of controller telemetry."""

    t: float
    command: np.ndarray
    tension: np.ndarray
    f_int: np.ndarray
    f_ext: np.ndarray
    velocity: np.ndarray
    status: str = STATUS_OK

    def as_row(self):
        """Flatten to the telemetry column order."""
        return [self.t, *self.command, *self.tension, *self.f_int, *self.f_ext, *self.velocity]


class ControllerState:
    """
    Mutable controller state.

    :param predictor: object with `predict(window_mm)` and `window_length`
    :param q0: cable positions at start; the history starts empty, so the
        controller holds `q0` for the first `window_length` ticks
    :param window_length: commands kept in the history (defaults to the predictor's)
    :param q_max: upper end of the actuation range (mm)
    """

    def __init__(self, predictor, q0, window_length=None, q_max=ACTUATION_RANGE_MM):
        n = window_length or predictor.window_length
        self.predictor = predictor
        self.q = np.clip(np.asarray(q0, dtype=float), 0.0, q_max)
        self.q_max = q_max
        self.history = deque(maxlen=n)
        self.tick = 0
        self.fault = False

    @property
    def window_length(self):
        return self.history.maxlen

    @property
    def warmed_up(self):
        return len(self.history) == self.history.maxlen

    def window(self):
        """Command history as an (m, 3) array, newest first (m < n during warm-up)."""
        return np.array(self.history).reshape(-1, N_CABLES)


def external_force(f_meas, f_int_pred):
    """
    External tension: measurement minus predicted internal tension.

    :param f_meas: measured tensions (N)
    :param f_int_pred: predicted internal tensions (N)
    :return: array of external tensions (N)
    """
    return np.asarray(f_meas, dtype=float) - np.asarray(f_int_pred, dtype=float)


def deadband_velocity(f_ext, cfg):
    """
    Deadband-proportional cable velocity, per cable.

    Zero for |F| <= lambda, else -beta * (F - lambda * sign(F)), clamped to
    +/- velocity_cap.

    :param f_ext: external tension(s) in N, scalar or array
    :param cfg: `ControllerConfig`
    :return: velocity in mm/s, same shape as `f_ext`
    """
    f = np.asarray(f_ext, dtype=float)
    excess = np.where(np.abs(f) <= cfg.lam, 0.0, f - cfg.lam * np.sign(f))
    v = np.clip(-cfg.beta * excess, -cfg.velocity_cap, cfg.velocity_cap)
    # Normalise -0.0 so the dead zone is exactly zero
    v = v + 0.0
    return float(v) if v.ndim == 0 else v


def select_lambda(val_mean_error, factor=LAMBDA_FACTOR):
    """
    Deadband from the predictor's validation mean error.

    :param val_mean_error: mean error in N
    :raises ValueError: if the error is not positive
    :return: lambda in N
    """
    if not val_mean_error > 0:
        raise ValueError("val_mean_error must be > 0")
    return factor * val_mean_error


def _hold(state, frame, status, f_int=None):
    if f_int is None:
        f_int = np.full(N_CABLES, np.nan)
        f_ext = np.full(N_CABLES, np.nan)
    else:
        f_ext = external_force(frame.tension, f_int)
    return ControlTick(frame.t, state.q.copy(), frame.tension.copy(), f_int, f_ext, np.zeros(N_CABLES), status)


def control_step(state, frame, cfg, enabled=True):
    """
    One controller tick: window -> predicted F_int -> F_ext -> velocity -> command.

    The returned command is appended to the history. Until the history holds
    a full window the controller holds position. A failing, non-finite or
    (when enforced) late prediction also holds position; a failure sets
    `state.fault`.

    :param state: `ControllerState` (updated in place)
    :param frame: `SensorFrame` produced by the last command in the history
    :param cfg: `ControllerConfig`
    :param enabled: False computes telemetry but never moves (ablation)
    :return: `ControlTick`
    """
    dt = 1.0 / cfg.rate
    state.tick += 1

    if not state.warmed_up:
        result = _hold(state, frame, STATUS_WARMUP)
    else:
        started = time.perf_counter()
        try:
            f_int = np.asarray(state.predictor.predict(state.window()), dtype=float)
            if f_int.shape != (N_CABLES,) or not np.all(np.isfinite(f_int)):
                raise FloatingPointError(f"invalid prediction {f_int}")
        except Exception as e:
            if not state.fault:
                logging.warning("Predictor failed at tick %d, holding position: %s", state.tick, e)
            state.fault = True
            result = _hold(state, frame, STATUS_PREDICTOR_FAULT)
        else:
            elapsed = time.perf_counter() - started
            if cfg.enforce_tick_budget and elapsed > cfg.tick_budget:
                logging.warning("Prediction took %.1f ms at tick %d, holding position", elapsed * 1e3, state.tick)
                result = _hold(state, frame, STATUS_OVER_BUDGET, f_int)
            elif not enabled:
                result = _hold(state, frame, STATUS_DISABLED, f_int)
            else:
                f_ext = external_force(frame.tension, f_int)
                v = deadband_velocity(f_ext, cfg)
                q_new = np.clip(state.q + v * dt, 0.0, state.q_max)
                result = ControlTick(frame.t, q_new, frame.tension.copy(), f_int, f_ext, (q_new - state.q) / dt)
                state.q = q_new

    state.history.appendleft(state.q.copy())
    return result


def run_closed_loop(plant, state, cfg, load_fn=None, ticks=100, enabled=True, on_tick=None):
    """
    Run the read -> predict -> command loop against a plant.

    :param plant: `SimulatedPlant`
    :param state: `ControllerState`
    :param cfg: `ControllerConfig`
    :param load_fn: callable(tick_index, tip_pose) -> external cable tensions, held over the tick
    :param ticks: number of control ticks
    :param enabled: False runs the ablation that never moves
    :param on_tick: optional callable(tick_index, ControlTick, plant) for scenario bookkeeping
    :return: tuple (list of `ControlTick`, fault flag); the loop stops at a force-cap fault
    """
    out = []
    command = state.q.copy()
    for k in range(ticks):
        ext = None if load_fn is None else load_fn(k, plant.tip_pose)
        frame = plant.step(command, ext)
        if frame.fault:
            logging.warning("Force cap exceeded at t=%.2f s (%.1f N); aborting loop", frame.t, frame.peak_raw)
            out.append(_hold(state, frame, STATUS_PLANT_FAULT))
            return out, True
        result = control_step(state, frame, cfg, enabled)
        out.append(result)
        if on_tick is not None:
            on_tick(k, result, plant)
        command = result.command
    return out, False
