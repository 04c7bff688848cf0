"""
Scripted experiments on the simulated plant.

Each scenario drives a fresh plant (and, where relevant, the compliance
controller) and returns tidy DataFrames ready for CSV export:

- rate statics: triangle waves on one cable at several speeds
- impulse: a wall pushed against the tip, responses aligned at the first
  deadband crossing
- insertion: a curved tube advanced and retracted around the tip, with the
  exceedance histogram of the contact force
"""
import math
import logging

import numpy as np
import pandas as pd

from constants import T_COLUMNS, Q_COLUMNS, TIP_PLANE_MATRIX, N_CABLES
from compliance_core.compliance import ControllerState, run_closed_loop
from compliance_core.errors import PlantFaultError
from compliance_core.robotsim import (
    SimulatedPlant, TubeGeometry, contact_force, tip_load_tensions, wall_contact,
)
from compliance_core.tipcal import tip_force

FEXT_COLUMNS = ["Fext1", "Fext2", "Fext3"]


def _plant_config(plant_cfg, noise_std):
    if noise_std is None:
        return plant_cfg
    return plant_cfg.model_copy(update={"noise_std": noise_std})


def triangle_wave(start, amplitude, speed, cycles, dwell, dt):
    """
    Positions of one cable moving start -> start + amplitude -> start at `speed`.

    :return: array of positions, one per tick, with `dwell` seconds at every turn
    """
    ramp = amplitude / speed
    knots_t, knots_q = [0.0], [start]
    t = 0.0
    for _ in range(cycles):
        for target in (start + amplitude, start):
            t += dwell
            knots_t.append(t)
            knots_q.append(knots_q[-1])
            t += ramp
            knots_t.append(t)
            knots_q.append(target)
    t += dwell
    knots_t.append(t)
    knots_q.append(start)
    ticks = np.arange(int(round(t / dt)) + 1) * dt
    return np.interp(ticks, knots_t, knots_q)


def rate_statics(plant_cfg, cfg):
    """
    Tension response of one cable to triangle waves at each configured speed.

    :param plant_cfg: `PlantConfig`
    :param cfg: `RateStaticsConfig`
    :raises PlantFaultError: if a sweep trips the force cap
    :return: DataFrame with columns speed, t, q1..q3, T1..T3
    """
    dt = 1.0 / plant_cfg.control_rate
    frames = []
    for speed in cfg.speeds:
        plant = SimulatedPlant(plant_cfg, q0=(cfg.start,) * N_CABLES)
        path = triangle_wave(cfg.start, cfg.amplitude, speed, cfg.cycles, cfg.dwell, dt)
        rows = np.zeros((len(path), 1 + 2 * N_CABLES))
        for k, pos in enumerate(path):
            cmd = np.full(N_CABLES, cfg.start)
            cmd[cfg.cable] = pos
            frame = plant.step(cmd)
            if frame.fault:
                raise PlantFaultError(f"Force cap exceeded at {speed} mm/s, t={frame.t:.2f} s")
            rows[k] = (frame.t, *cmd, *frame.tension)
        df = pd.DataFrame(rows, columns=["t", *Q_COLUMNS, *T_COLUMNS])
        df.insert(0, "speed", speed)
        frames.append(df)
        logging.info("Rate statics at %.1f mm/s: %d ticks", speed, len(df))
    return pd.concat(frames, ignore_index=True)


def exceedance_histogram(force_trace, thresholds, dt):
    """
    Time spent strictly above each threshold.

    :param force_trace: contact force magnitudes, one per tick (N)
    :param thresholds: thresholds in N
    :param dt: tick length (s)
    :return: array of durations (s), non-increasing when thresholds increase
    """
    f = np.asarray(force_trace, dtype=float)
    return np.array([np.count_nonzero(f > th) * dt for th in thresholds])


def trigger_index(f_ext, lam):
    """First tick at which any cable's |F_ext| exceeds `lam`, or None."""
    above = np.any(np.abs(np.asarray(f_ext, dtype=float)) > lam, axis=1)
    hits = np.flatnonzero(above)
    return int(hits[0]) if len(hits) else None


def align_impulses(traces, lam):
    """
    Align impulse responses at their first deadband crossing.

    :param traces: list of DataFrames with `Fext1..3` columns (one row per tick)
    :param lam: deadband in N
    :return: list of (trigger index, trace with a `t_aligned` column); traces that never trigger are dropped
    """
    aligned = []
    for trace in traces:
        idx = trigger_index(trace[FEXT_COLUMNS].to_numpy(), lam)
        if idx is None:
            continue
        out = trace.copy()
        out["t_aligned"] = out["t"] - out["t"].iloc[idx]
        aligned.append((idx, out))
    return aligned


def impulse_audit(f_ext, trigger, lam, dt, settle_limit=2.0, early=0.5, tolerance=0.02):
    """
    Pass/fail audit of one impulse response on the triggered cable.

    :param f_ext: external tension of the triggered cable per tick (N)
    :param trigger: index of the first deadband crossing
    :param lam: deadband (N)
    :param dt: tick length (s)
    :param settle_limit: seconds allowed to return inside the deadband
    :param early: horizon (s) at which half the peak excess must be gone
    :param tolerance: fraction of `lam` still counted as inside the deadband; without
        noise the deadband law only approaches `lam` asymptotically
    :return: dict with `time_to_deadband`, `excess_removed`, `passed`
    """
    mag = np.abs(np.asarray(f_ext, dtype=float))[trigger:]
    excess = np.maximum(mag - lam, 0.0)
    early_ticks = int(round(early / dt))
    peak_idx = int(np.argmax(excess[:early_ticks + 1]))
    peak = float(excess[peak_idx])

    inside = np.flatnonzero(mag[peak_idx:] <= lam * (1.0 + tolerance))
    time_to_deadband = float((peak_idx + inside[0]) * dt) if len(inside) else math.inf
    if early_ticks < len(excess):
        removed = 1.0 - float(excess[early_ticks]) / peak if peak > 0 else 1.0
    else:
        removed = 0.0
    return {
        "time_to_deadband": time_to_deadband,
        "peak_excess": peak,
        "excess_removed": removed,
        "passed": time_to_deadband <= settle_limit and removed >= 0.5,
    }


def _settled_controller(plant, predictor, ctrl_cfg, pose, settle_ticks):
    """Reset to `pose` and run the controller unloaded until the history is full."""
    plant.reset(pose)
    state = ControllerState(predictor, pose, ctrl_cfg.window_length, plant.cfg.actuation_range)
    ticks = max(settle_ticks, state.window_length)
    _, fault = run_closed_loop(plant, state, ctrl_cfg, ticks=ticks)
    if fault:
        raise PlantFaultError("Force cap exceeded while settling the controller")
    return state


def impulse(plant_cfg, predictor, ctrl_cfg, cfg, seed=0, telemetry=None):
    """
    Wall-contact impulses against the compliant tip.

    Each trial settles the controller at `cfg.pose`, then places a stiff wall
    whose normal opposes one cable so that cable sees a step of external
    tension of magnitude m * lambda, with m drawn from `cfg.magnitude_range`.
    The triggered cable cycles through the three cables.

    :param plant_cfg: `PlantConfig` (noise replaced by `cfg.noise_std` when set)
    :param predictor: trained `TensionPredictor`
    :param ctrl_cfg: `ControllerConfig`
    :param cfg: `ImpulseConfig`
    :param seed: seed for the magnitudes
    :param telemetry: optional list that receives each trial's `ControlTick` list
    :return: tuple (per-tick traces DataFrame, per-trial summary DataFrame)
    """
    plant_cfg = _plant_config(plant_cfg, cfg.noise_std)
    plant = SimulatedPlant(plant_cfg, q0=cfg.pose)
    rng = np.random.default_rng(seed)
    dt = 1.0 / plant_cfg.control_rate
    alpha = plant_cfg.tip_coupling
    settle_ticks = int(round(cfg.settle / dt))
    hold_ticks = int(round(cfg.hold / dt))
    lam = ctrl_cfg.lam

    traces, summary = [], []
    for trial in range(cfg.trials):
        cable = trial % N_CABLES
        magnitude = float(rng.uniform(*cfg.magnitude_range))
        state = _settled_controller(plant, predictor, ctrl_cfg, cfg.pose, settle_ticks)

        # Wall normal opposes the cable direction so only that cable is loaded positively
        normal = -TIP_PLANE_MATRIX[:, cable]
        depth = 3.0 * alpha * magnitude * lam / (4.0 * cfg.wall_stiffness)
        point = plant.tip_pose + depth * normal
        wall_force = []

        def load(k, tip):
            force = wall_contact(tip, point, normal, cfg.wall_stiffness)
            wall_force.append(float(np.hypot(*force)))
            return tip_load_tensions(force, alpha)

        t0 = plant.time
        ticks, fault = run_closed_loop(plant, state, ctrl_cfg, load, hold_ticks)
        if telemetry is not None:
            telemetry.append(ticks)
        f_ext = np.array([tk.f_ext for tk in ticks])
        est = np.array([tip_force(fe, alpha).magnitude if np.all(np.isfinite(fe)) else np.nan for fe in f_ext])
        df = pd.DataFrame(f_ext, columns=FEXT_COLUMNS)
        df.insert(0, "t", [tk.t - t0 for tk in ticks])
        df.insert(0, "trial", trial)
        df["q1"], df["q2"], df["q3"] = np.array([tk.command for tk in ticks]).T
        df["wall_force"] = wall_force[:len(df)]
        df["tip_force_est"] = est
        traces.append(df)

        idx = trigger_index(f_ext, lam)
        row = {"trial": trial, "cable": cable + 1, "magnitude": magnitude, "fault": fault,
               "trigger_index": idx}
        if idx is not None:
            row.update(impulse_audit(f_ext[:, cable], idx, lam, dt))
        else:
            row.update({"time_to_deadband": math.nan, "peak_excess": 0.0, "excess_removed": math.nan,
                        "passed": False})
        summary.append(row)
        logging.info("Impulse %d on cable %d (%.2f x lambda): %s", trial, cable + 1, magnitude,
                     "pass" if row["passed"] else "FAIL")

    return pd.concat(traces, ignore_index=True), pd.DataFrame(summary)


def mean_aligned_trace(traces, lam, column="tip_force_est", dt=0.01):
    """
    Mean of `column` over all triggered trials on the aligned time axis.

    :param traces: per-tick traces from `impulse`
    :param lam: deadband (N)
    :param column: column to average
    :param dt: tick length (s)
    :return: DataFrame with t_aligned, mean, std, trials
    """
    aligned = [a for _, a in align_impulses([g for _, g in traces.groupby("trial")], lam)]
    if not aligned:
        return pd.DataFrame(columns=["t_aligned", "mean", "std", "trials"])
    stacked = pd.concat(aligned, ignore_index=True)
    stacked["tick"] = np.round(stacked["t_aligned"] / dt).astype(int)
    grouped = stacked.groupby("tick")[column]
    out = pd.DataFrame({"mean": grouped.mean(), "std": grouped.std(ddof=0), "trials": grouped.count()})
    out.insert(0, "t_aligned", out.index * dt)
    return out.reset_index(drop=True)


def tube_offset(s, cfg):
    """Lateral offset (mm) of the tube centre at insertion depth `s`."""
    s = np.clip(s, 0.0, cfg.depth)
    return cfg.lateral_offset * 0.5 * (1.0 - np.cos(np.pi * s / cfg.depth))


def insertion_depths(cfg, dt):
    """Depth of the tube per tick over all insert/retract cycles."""
    travel = cfg.depth / cfg.advance_speed
    knots_t, knots_s = [0.0], [0.0]
    t = 0.0
    for _ in range(cfg.cycles):
        for target in (cfg.depth, 0.0):
            t += travel
            knots_t.append(t)
            knots_s.append(target)
            t += cfg.dwell
            knots_t.append(t)
            knots_s.append(target)
    ticks = np.arange(int(round(t / dt)) + 1) * dt
    return np.interp(ticks, knots_t, knots_s)


def insertion(plant_cfg, predictor, ctrl_cfg, cfg, enabled=True, telemetry=None):
    """
    Advance and retract a curved tube around the tip while the controller complies.

    The tube cross-section at the current depth is a short centreline segment
    offset along `bend_direction` by `tube_offset`. With `enabled=False` the
    controller never moves (ablation); a force-cap fault ends the run and the
    trace keeps everything up to the fault.

    :param plant_cfg: `PlantConfig`
    :param predictor: trained `TensionPredictor`
    :param ctrl_cfg: `ControllerConfig`
    :param cfg: `InsertConfig`
    :param enabled: run the controller (True) or hold position (False)
    :param telemetry: optional list that receives the run's `ControlTick` list
    :return: tuple (per-tick DataFrame, summary dict)
    """
    plant_cfg = _plant_config(plant_cfg, cfg.noise_std)
    plant = SimulatedPlant(plant_cfg, q0=cfg.pose)
    dt = 1.0 / plant_cfg.control_rate
    alpha = plant_cfg.tip_coupling
    state = _settled_controller(plant, predictor, ctrl_cfg, cfg.pose, ctrl_cfg.window_length)

    origin = plant.tip_pose
    bend = np.array([math.cos(math.radians(cfg.bend_direction)), math.sin(math.radians(cfg.bend_direction))])
    depths = insertion_depths(cfg, dt)
    contact = np.zeros(len(depths))

    def load(k, tip):
        s = depths[k]
        h = cfg.section_step
        centre = [origin + tube_offset(s + d, cfg) * bend for d in (-h, 0.0, h)]
        tube = TubeGeometry(np.array(centre), cfg.inner_radius, cfg.contact_stiffness)
        force = contact_force(tip, tube)
        contact[k] = float(np.hypot(*force))
        return tip_load_tensions(force, alpha)

    ticks, fault = run_closed_loop(plant, state, ctrl_cfg, load, len(depths), enabled=enabled)
    if telemetry is not None:
        telemetry.append(ticks)
    n = len(ticks)
    df = pd.DataFrame({
        "t": np.arange(n) * dt,
        "depth": depths[:n],
        "contact_force": contact[:n],
    })
    df[Q_COLUMNS] = np.array([tk.command for tk in ticks])
    df[FEXT_COLUMNS] = np.array([tk.f_ext for tk in ticks])
    df["status"] = [tk.status for tk in ticks]

    cycle_ticks = max(1, int(round((2 * cfg.depth / cfg.advance_speed + 2 * cfg.dwell) / dt)))
    df["cycle"] = np.minimum(np.arange(n) // cycle_ticks, cfg.cycles - 1)

    summary = {
        "enabled": enabled,
        "aborted": fault,
        "peak_contact_force": float(df["contact_force"].max()) if n else 0.0,
        "ticks": n,
    }
    if fault:
        logging.warning("Insertion (%s) aborted at t=%.2f s by a force-cap fault",
                        "controller on" if enabled else "controller off", n * dt)
    return df, summary


def insertion_histogram(df, thresholds, dt):
    """
    Per-cycle exceedance durations and their mean.

    :param df: per-tick insertion DataFrame
    :param thresholds: thresholds (N)
    :param dt: tick length (s)
    :return: DataFrame with one row per cycle plus a `mean` row; columns are thresholds
    """
    rows = {}
    for cycle, group in df.groupby("cycle"):
        rows[int(cycle)] = exceedance_histogram(group["contact_force"], thresholds, dt)
    hist = pd.DataFrame.from_dict(rows, orient="index", columns=[f"{th:g}" for th in thresholds])
    hist.index.name = "cycle"
    hist.loc["mean"] = hist.mean(axis=0)
    return hist
