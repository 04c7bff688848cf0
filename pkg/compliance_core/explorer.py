"""
Training-data collection by randomized exploration of cable space.

A waypoint generator pursues random targets in the (x, y) plane with a
styled speed, heading wander and random pauses; the style is re-rolled every
`epoch_length` seconds. Each waypoint is lifted to cable positions through
the (x, y, c) transform with `c` read from the learned tension surface, and
the unloaded plant's response is recorded at the control rate.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from constants import DATASET_COLUMNS, T_COLUMNS
from compliance_core.surface import TensionSurface, q_to_xyc, xyc_to_q, loess_query, surface_update


@dataclass(frozen=True)
class MotionStyle:
    """
    How the explorer moves during one style epoch.

    :param velocity: speed in the (x, y) plane (units/s)
    :param jerkiness: bound on the heading wander rate (rad/s); 0 gives straight pursuit
    :param pause_probability: chance per tick of starting a pause
    :param pause_duration: (min, max) pause length in seconds
    """

    velocity: float
    jerkiness: float = 0.0
    pause_probability: float = 0.0
    pause_duration: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.velocity <= 0:
            raise ValueError("velocity must be > 0")
        if self.jerkiness < 0:
            raise ValueError("jerkiness must be >= 0")
        if not 0 <= self.pause_probability <= 1:
            raise ValueError("pause_probability must lie in [0, 1]")


@dataclass(frozen=True)
class StyleRanges:
    """Sampling ranges for re-rolled motion styles."""

    velocity: tuple
    jerkiness: tuple
    pause_probability: tuple
    pause_duration: tuple

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.velocity_range, cfg.jerkiness_range, cfg.pause_probability_range, cfg.pause_duration_range)

    def sample(self, rng):
        """Draw one `MotionStyle` uniformly from the ranges."""
        return MotionStyle(
            velocity=float(rng.uniform(*self.velocity)),
            jerkiness=float(rng.uniform(*self.jerkiness)),
            pause_probability=float(rng.uniform(*self.pause_probability)),
            pause_duration=tuple(self.pause_duration),
        )


@dataclass(frozen=True)
class WorkspaceBounds:
    """Axis-aligned box in the (x, y) plane."""

    x_range: tuple
    y_range: tuple

    def __post_init__(self):
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValueError("workspace bounds must be non-empty")

    @property
    def diameter(self):
        return math.hypot(self.x_range[1] - self.x_range[0], self.y_range[1] - self.y_range[0])

    def sample(self, rng):
        return np.array([rng.uniform(*self.x_range), rng.uniform(*self.y_range)])

    def clip(self, p):
        return np.array([np.clip(p[0], *self.x_range), np.clip(p[1], *self.y_range)])


def motion_generator(styles, bounds, rng, dt, epoch_length=20.0, arrival_radius=None, start=None):
    """
    Yield one (x, y) waypoint per tick, forever.

    The heading points at the current target plus a wander angle whose rate
    is bounded by the style's jerkiness. A step never exceeds velocity * dt and
    lands exactly on the target when closer than that. Pauses hold the point.

    :param styles: a `MotionStyle` (fixed) or `StyleRanges` (re-rolled every `epoch_length`)
    :param bounds: `WorkspaceBounds`
    :param rng: numpy Generator
    :param dt: tick length in seconds
    :param epoch_length: seconds between style re-rolls
    :param arrival_radius: target radius; defaults to 2% of the workspace diameter
    :param start: initial point; defaults to the box centre
    """
    if arrival_radius is None:
        arrival_radius = 0.02 * bounds.diameter
    ticks_per_epoch = max(1, int(round(epoch_length / dt)))

    def pick_style():
        return styles.sample(rng) if isinstance(styles, StyleRanges) else styles

    pos = bounds.clip(np.asarray(start, dtype=float)) if start is not None else np.array(
        [np.mean(bounds.x_range), np.mean(bounds.y_range)]
    )
    target = bounds.sample(rng)
    style = pick_style()
    wander = 0.0
    pause_left = 0.0
    tick = 0

    while True:
        if tick > 0 and tick % ticks_per_epoch == 0:
            style = pick_style()
            logging.debug("Motion style: %s", style)
        tick += 1

        if pause_left > 0:
            pause_left -= dt
            yield pos.copy()
            continue
        if style.pause_probability > 0 and rng.random() < style.pause_probability:
            pause_left = float(rng.uniform(*style.pause_duration)) - dt
            yield pos.copy()
            continue

        offset = target - pos
        dist = float(np.hypot(*offset))
        if dist < arrival_radius:
            target = bounds.sample(rng)
            offset = target - pos
            dist = float(np.hypot(*offset))

        if style.jerkiness > 0:
            wander += float(rng.uniform(-style.jerkiness, style.jerkiness)) * dt
            wander = float(np.clip(wander, -math.pi / 2, math.pi / 2))
        else:
            wander = 0.0

        step = style.velocity * dt
        if dist <= step and wander == 0.0:
            pos = target.copy()
        elif dist > 0:
            heading = math.atan2(offset[1], offset[0]) + wander
            pos = bounds.clip(pos + min(step, dist) * np.array([math.cos(heading), math.sin(heading)]))
        yield pos.copy()


def collect(plant, duration, styles, target_range, cfg, rng=None):
    """
    Explore cable space with the unloaded plant and record commands and tensions.

    A force-cap fault ends the current session: the faulted tick is dropped,
    the plant returns to the safe pose and exploration resumes in a new session.

    :param plant: `SimulatedPlant`
    :param duration: seconds to record
    :param styles: `MotionStyle` or `StyleRanges`
    :param target_range: (low, high) safe tension range in N
    :param cfg: `ExplorerConfig`
    :param rng: numpy Generator; seeded from `cfg.rng_seed` when omitted
    :return: DataFrame with `DATASET_COLUMNS`
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    dt = 1.0 / plant.cfg.control_rate
    q_max = plant.cfg.actuation_range
    bounds = WorkspaceBounds(tuple(cfg.x_range), tuple(cfg.y_range))
    radius = cfg.arrival_fraction * bounds.diameter
    surface = TensionSurface.from_config(cfg)

    def restart():
        home = q_to_xyc(plant.cable_pos)
        gen = motion_generator(styles, bounds, rng, dt, cfg.epoch_length, radius, start=(home.x, home.y))
        return gen, home.c

    waypoints, c_home = restart()
    ticks = int(round(duration / dt))
    session = 0
    rows = np.zeros((ticks, len(DATASET_COLUMNS)))
    n_rows = 0
    faults = 0

    for k in range(ticks):
        x, y = next(waypoints)
        c = loess_query(surface, x, y).c if surface.ready else c_home
        q = np.clip(xyc_to_q((x, y, c + surface.c_bias)), 0.0, q_max)
        frame = plant.step(q)
        if frame.fault:
            faults += 1
            logging.warning("Force cap exceeded at t=%.2f s (%.1f N); starting session %d",
                            k * dt, frame.peak_raw, session + 1)
            session += 1
            plant.reset(cfg.safe_pose)
            surface.c_bias = 0.0
            waypoints, c_home = restart()
            continue
        rows[n_rows] = (k * dt, *q, *frame.tension, session)
        n_rows += 1
        surface_update(surface, q, frame.tension, target_range, cfg.c_step, cfg.c_bias_decay)

    df = pd.DataFrame(rows[:n_rows], columns=DATASET_COLUMNS)
    df["session"] = df["session"].astype(int)
    logging.info("Collected %d records in %d session(s), %d fault(s), %d surface samples",
                 len(df), session + 1, faults, len(surface))
    return df


def split(d, frac=0.8):
    """
    Contiguous temporal split.

    :param d: dataset DataFrame
    :param frac: fraction of records in the training split
    :raises ValueError: on an empty dataset or a fraction outside (0, 1)
    :return: tuple (train, val) with fresh indices
    """
    if len(d) == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0 < frac < 1:
        raise ValueError("frac must lie in (0, 1)")
    cut = int(len(d) * frac)
    return d.iloc[:cut].reset_index(drop=True), d.iloc[cut:].reset_index(drop=True)


def dataset_summary(d):
    """
    Per-session record counts, durations and tension statistics.

    :param d: dataset DataFrame
    :return: DataFrame indexed by session
    """
    grouped = d.groupby("session")
    summary = pd.DataFrame({
        "records": grouped.size(),
        "t_start": grouped["t"].min(),
        "t_end": grouped["t"].max(),
    })
    for col in T_COLUMNS:
        summary[f"{col}_mean"] = grouped[col].mean()
        summary[f"{col}_std"] = grouped[col].std(ddof=0)
        summary[f"{col}_max"] = grouped[col].max()
    return summary
