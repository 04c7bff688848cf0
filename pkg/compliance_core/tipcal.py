"""
Tip-plane force interpretation and coupling-constant calibration.

External cable tensions project into the tip plane through the same 2x3
matrix that gives x and y of the cable-space transform, scaled by alpha / 2.
The projection reports the force the cables hold against, i.e. the reaction
to a load pulling on the tip. Alpha is fitted from held poses loaded with
known coin weights.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from constants import TIP_PLANE_MATRIX, GRAVITY, COIN_MASS_KG, N_CABLES
from compliance_core.compliance import external_force
from compliance_core.robotsim import tip_load_tensions

CALIBRATION_COLUMNS = [
    "pose", "weight_g", "repetition", "applied_N",
    "Text1", "Text2", "Text3",
    "Fx_fit", "Fy_fit", "Fx_applied", "Fy_applied", "F_fit_N",
]


@dataclass(frozen=True)
class TipForce:
    fx: float
    fy: float

    def as_array(self):
        return np.array([self.fx, self.fy])

    @property
    def magnitude(self):
        return math.hypot(self.fx, self.fy)


@dataclass(frozen=True)
class CalibTrial:
    """
    One held-pose load measurement.

    :param pose_id: index of the calibration pose
    :param applied_force: load magnitude in N (>= 0)
    :param direction: unit vector in the tip plane along which the load pulls
    :param measured_ext_tensions: averaged external tensions (N), tare removed when enabled
    :param weight_g: load in grams
    :param repetition: repetition index at this pose and load
    """

    pose_id: int
    applied_force: float
    direction: tuple
    measured_ext_tensions: tuple
    weight_g: float = 0.0
    repetition: int = 0

    def __post_init__(self):
        if self.applied_force < 0:
            raise ValueError("applied_force must be >= 0")

    @property
    def held_force(self):
        """Force the cables hold against the load: minus the load vector."""
        return -self.applied_force * np.asarray(self.direction, dtype=float)


def tip_force(T, alpha):
    """
    Project cable tensions into the tip plane.

    :param T: cable tensions (N), shape (3,)
    :param alpha: coupling constant (> 0)
    :return: `TipForce`
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    fx, fy = 0.5 * alpha * (TIP_PLANE_MATRIX @ np.asarray(T, dtype=float))
    return TipForce(float(fx), float(fy))


def coin_force(coins):
    """Weight of `coins` 9 g coins in N."""
    return coins * COIN_MASS_KG * GRAVITY


def fit_alpha(trials):
    """
    Least-squares fit of alpha over both planar components of every trial.

    Minimises sum ||(alpha / 2) M T_i - f_i||^2 with f_i the held force.

    :param trials: list of `CalibTrial`
    :raises ValueError: with fewer than two loaded trials or a degenerate design
    :return: tuple (alpha, RMS residual in N)
    """
    loaded = [t for t in trials if t.applied_force > 0]
    if len(loaded) < 2:
        raise ValueError("fit_alpha needs at least two trials with a nonzero applied force")

    g = np.array([0.5 * (TIP_PLANE_MATRIX @ np.asarray(t.measured_ext_tensions, dtype=float)) for t in trials])
    f = np.array([t.held_force for t in trials])
    gg = float(np.sum(g * g))
    if gg == 0.0:
        raise ValueError("measured tensions have no tip-plane component; alpha is undefined")
    alpha = float(np.sum(g * f)) / gg
    residual = float(np.sqrt(np.mean(np.sum((alpha * g - f) ** 2, axis=1))))
    return alpha, residual


def _direction(deg):
    rad = math.radians(deg)
    return np.array([math.cos(rad), math.sin(rad)])


def _hold_and_average(plant, pose, ext, settle_ticks, average_ticks):
    """Hold `pose` under constant `ext`; mean tension over the averaging span, or None on a fault."""
    total = np.zeros(N_CABLES)
    for k in range(settle_ticks + average_ticks):
        frame = plant.step(pose, ext)
        if frame.fault:
            return None
        if k >= settle_ticks:
            total += frame.tension
    return total / average_ticks


def run_calibration(plant, predictor, cfg):
    """
    Simulated coin-weight protocol.

    For every pose and load level the plant is settled at the pose, loaded with
    the weight pulling along the pose's direction and the external tension
    F_meas - F_int_pred averaged. With `cfg.tare` the mean zero-load external
    tension of each pose is subtracted. Trials hitting the force cap are
    discarded.

    :param plant: `SimulatedPlant` (its ground-truth coupling generates the load)
    :param predictor: trained `TensionPredictor`
    :param cfg: `CalibrateConfig`
    :return: list of `CalibTrial`
    """
    rate = plant.cfg.control_rate
    settle_ticks = int(round(cfg.settle * rate))
    average_ticks = max(1, int(round(cfg.average * rate)))
    n = predictor.window_length
    trials = []

    for pose_id, (pose, deg) in enumerate(zip(cfg.poses, cfg.load_directions_deg)):
        pose = np.asarray(pose, dtype=float)
        direction = _direction(deg)
        f_int = np.asarray(predictor.predict(np.tile(pose, (n, 1))), dtype=float)

        def measure(weight_g):
            force = weight_g / 1000.0 * GRAVITY
            ext = tip_load_tensions(force * direction, plant.cfg.tip_coupling)
            plant.reset(pose)
            mean = _hold_and_average(plant, pose, ext, settle_ticks, average_ticks)
            return force, None if mean is None else external_force(mean, f_int)

        tare = np.zeros(N_CABLES)
        if cfg.tare:
            zeros = [measure(0.0)[1] for _ in range(cfg.repetitions)]
            zeros = [z for z in zeros if z is not None]
            if zeros:
                tare = np.mean(zeros, axis=0)
            logging.info("Pose %d tare: %s N", pose_id, np.round(tare, 4).tolist())

        for weight in cfg.weights_g:
            for rep in range(cfg.repetitions):
                force, f_ext = measure(weight)
                if f_ext is None:
                    logging.warning("Pose %d, %.0f g, repetition %d hit the force cap; discarded",
                                    pose_id, weight, rep)
                    continue
                trials.append(CalibTrial(
                    pose_id=pose_id,
                    applied_force=force,
                    direction=tuple(direction.tolist()),
                    measured_ext_tensions=tuple((f_ext - tare).tolist()),
                    weight_g=float(weight),
                    repetition=rep,
                ))
    return trials


def calibration_report(trials, alpha, residual, alpha_true=None):
    """
    Tabulate trials with the fitted projection.

    :param trials: list of `CalibTrial`
    :param alpha: fitted coupling constant
    :param residual: RMS residual of the fit (N)
    :param alpha_true: optional ground-truth coupling of the plant
    :return: tuple (DataFrame of trials, summary dict)
    """
    rows = []
    for t in trials:
        fitted = tip_force(t.measured_ext_tensions, alpha)
        held = t.held_force
        rows.append({
            "pose": t.pose_id,
            "weight_g": t.weight_g,
            "repetition": t.repetition,
            "applied_N": t.applied_force,
            "Text1": t.measured_ext_tensions[0],
            "Text2": t.measured_ext_tensions[1],
            "Text3": t.measured_ext_tensions[2],
            "Fx_fit": fitted.fx,
            "Fy_fit": fitted.fy,
            "Fx_applied": held[0],
            "Fy_applied": held[1],
            "F_fit_N": fitted.magnitude,
        })
    summary = {
        "alpha": alpha,
        "inverse_alpha": 1.0 / alpha if alpha else None,
        "residual_N": residual,
        "trials": len(trials),
    }
    if alpha_true is not None:
        summary["alpha_true"] = alpha_true
        summary["relative_error"] = abs(alpha - alpha_true) / alpha_true
    return pd.DataFrame(rows, columns=CALIBRATION_COLUMNS), summary
