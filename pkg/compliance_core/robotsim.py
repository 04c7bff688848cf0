"""
Discrete-time simulated plant standing in for the tendon-driven robot.

Maps commanded cable positions plus external cable loads to filtered tension
measurements. Internal tension is the sum of a piecewise-linear static
stiffness, a direction-dependent hysteresis offset blended exponentially over
cable travel, a transient excursion excited by velocity changes, a viscous
term and sensor noise. The excursion continues in the direction the cable was
moving, so a sudden stop overshoots the steady tension, and it decays with
`restitution_tau`. Raw samples are generated at `sample_rate_fast` and
decimated to the control rate after the first-order sensor filter.

Each control tick moves the cables at constant velocity, so every fast-rate
component has a closed form over the tick and the 200 substeps are evaluated
as one block.
"""
import math
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from constants import FILTER_KEEP, FILTER_GAIN, TIP_PLANE_MATRIX, N_CABLES
from compliance_core.errors import NonFiniteError, ShapeMismatchError


@dataclass
class SensorFrame:
    """Filtered tension measurement delivered to the control loop at one tick."""

    tension: np.ndarray
    fault: bool = False
    peak_raw: float = 0.0
    t: float = 0.0


@dataclass
class PlantState:
    """Hidden state of the simulated robot."""

    cable_pos: np.ndarray
    cable_vel: np.ndarray
    hysteresis_state: np.ndarray
    transient_tension: np.ndarray
    filter_state: np.ndarray
    tip_pose: np.ndarray
    rng: np.random.Generator = field(repr=False)
    time: float = 0.0


@dataclass
class TubeGeometry:
    """
    Tube cross-section in the tip plane.

    :param centerline: ordered (m, 2) points of the tube centre (mm)
    :param inner_radius: tube inner radius (mm)
    :param contact_stiffness: penalty stiffness of the wall (N/mm)
    """

    centerline: np.ndarray
    inner_radius: float = 13.0
    contact_stiffness: float = 10.0

    def __post_init__(self):
        self.centerline = np.atleast_2d(np.asarray(self.centerline, dtype=float))
        if self.centerline.ndim != 2 or self.centerline.shape[1] != 2:
            raise ShapeMismatchError("centerline must be a sequence of 2-vectors")
        if len(self.centerline) < 2:
            raise ValueError("centerline needs at least two points")
        if self.inner_radius <= 0:
            raise ValueError("inner_radius must be > 0")


def lowpass_update(y_prev, x):
    """
    One step of the sensor filter y[n] = (255/256) y[n-1] + (1/256) x[n].

    Works elementwise on scalars or arrays.
    """
    return FILTER_KEEP * y_prev + FILTER_GAIN * x


def lowpass_block(y_prev, x_block):
    """
    Run a block of fast-rate samples through `lowpass_update`.

    :param y_prev: filter state before the block, shape (3,)
    :param x_block: raw samples, shape (m, 3), oldest first
    :return: filtered samples, shape (m, 3)
    """
    zi = (FILTER_KEEP * np.asarray(y_prev, dtype=float))[None, :]
    y, _ = lfilter([FILTER_GAIN], [1.0, -FILTER_KEEP], x_block, axis=0, zi=zi)
    return y


def static_tension(cfg, q):
    """
    Evaluate the static stiffness curve per cable.

    :param cfg: `PlantConfig`
    :param q: cable extensions (mm), any shape
    :return: tensions (N), same shape as `q`
    """
    xs, ys = zip(*cfg.stiffness_curve)
    return np.interp(q, xs, ys)


def tip_pose_of(state, scale=1.0):
    """
    Tip position in the tip plane from the cable positions.

    :param state: `PlantState`
    :param scale: mm of tip travel per model unit
    :return: (x, y)
    """
    return scale * (TIP_PLANE_MATRIX @ state.cable_pos)


def initial_state(cfg, q0=None, rng=None):
    """
    Settled plant state at rest at `q0`.

    The filter starts at the static tension of `q0`; hysteresis and transient
    memories start empty.

    :param cfg: `PlantConfig`
    :param q0: initial cable positions (defaults to `cfg.initial_pos`)
    :param rng: optional Generator to continue; a fresh one is seeded from `cfg.rng_seed`
    :return: `PlantState`
    """
    q0 = np.array(cfg.initial_pos if q0 is None else q0, dtype=float)
    if q0.shape != (N_CABLES,):
        raise ShapeMismatchError(f"q0 must have shape (3,), got {q0.shape}")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    state = PlantState(
        cable_pos=q0,
        cable_vel=np.zeros(N_CABLES),
        hysteresis_state=np.zeros(N_CABLES),
        transient_tension=np.zeros(N_CABLES),
        filter_state=static_tension(cfg, q0),
        tip_pose=np.zeros(2),
        rng=rng,
    )
    state.tip_pose = tip_pose_of(state, cfg.pose_scale)
    return state


def plant_step(state, cfg, cmd, ext_tension=None, dt=None):
    """
    Advance the plant by one control tick.

    The state's random generator is advanced in place, so the returned state
    supersedes `state`.

    :param state: current `PlantState`
    :param cfg: `PlantConfig`
    :param cmd: commanded cable positions (mm), shape (3,)
    :param ext_tension: external cable tensions (N) held over the tick, shape (3,)
    :param dt: tick length in seconds; must equal 1 / control_rate
    :raises NonFiniteError: if the command is not finite
    :raises ValueError: if the command leaves the actuation range or `dt` is wrong
    :return: tuple of (`PlantState`, `SensorFrame`)
    """
    tick = 1.0 / cfg.control_rate
    if dt is not None and not math.isclose(dt, tick, rel_tol=1e-9):
        raise ValueError(f"dt must equal 1/control_rate ({tick}), got {dt}")

    cmd = np.asarray(cmd, dtype=float)
    if cmd.shape != (N_CABLES,):
        raise ShapeMismatchError(f"command must have shape (3,), got {cmd.shape}")
    if not np.all(np.isfinite(cmd)):
        raise NonFiniteError("non-finite actuator command rejected")
    if np.any(cmd < -1e-9) or np.any(cmd > cfg.actuation_range + 1e-9):
        raise ValueError(f"command {cmd} outside actuation range [0, {cfg.actuation_range}]")

    ext = np.zeros(N_CABLES) if ext_tension is None else np.asarray(ext_tension, dtype=float)
    if ext.shape != (N_CABLES,):
        raise ShapeMismatchError(f"ext_tension must have shape (3,), got {ext.shape}")

    m = cfg.substeps
    h = tick / m
    k = np.arange(1, m + 1, dtype=float)[:, None]

    # Servo tracks the setpoint at constant velocity over the tick, rate limited
    vel = np.clip((cmd - state.cable_pos) / tick, -cfg.actuator_rate_limit, cfg.actuator_rate_limit)
    pos = state.cable_pos + vel * h * k

    # Direction memory blends toward +/- width with cable travel
    moving = vel != 0.0
    target = cfg.hysteresis_width * np.sign(vel)
    blend = np.exp(-np.abs(vel) * h / cfg.hysteresis_blend)
    hyst = np.where(
        moving,
        target + (state.hysteresis_state - target) * blend ** k,
        state.hysteresis_state,
    )

    # Velocity changes carry the tension on in the direction the cable was moving,
    # then relax toward zero
    decay = math.exp(-h / cfg.restitution_tau)
    heading = np.where(state.cable_vel != 0.0, np.sign(state.cable_vel), np.sign(vel))
    kick = state.transient_tension + cfg.overshoot_gain * np.abs(vel - state.cable_vel) * heading
    transient = kick * decay ** k

    raw = static_tension(cfg, pos) + hyst + transient + cfg.viscous_coeff * vel + ext
    if cfg.noise_std > 0:
        raw = raw + state.rng.normal(0.0, cfg.noise_std, size=raw.shape)
    # Cables cannot push
    raw = np.maximum(raw, 0.0)

    peak = float(raw.max())
    fault = peak > cfg.force_cap
    if fault:
        logging.debug("Raw tension %.2f N exceeds force cap %.1f N", peak, cfg.force_cap)

    filtered = lowpass_block(state.filter_state, raw)

    new_state = replace(
        state,
        cable_pos=pos[-1].copy(),
        cable_vel=vel,
        hysteresis_state=hyst[-1].copy(),
        transient_tension=transient[-1].copy(),
        filter_state=filtered[-1].copy(),
        time=state.time + tick,
    )
    new_state.tip_pose = tip_pose_of(new_state, cfg.pose_scale)

    frame = SensorFrame(tension=new_state.filter_state.copy(), fault=fault, peak_raw=peak, t=new_state.time)
    return new_state, frame


def tip_load_tensions(force_on_tip, coupling):
    """
    External cable tensions produced by a force acting on the tip.

    The cables hold against the push, so the returned tensions project through
    the tip-plane matrix (with coupling `coupling`) onto the reaction
    `-force_on_tip`. They are the minimum-norm, zero-sum solution.

    :param force_on_tip: (Fx, Fy) exerted by the environment on the tip (N)
    :param coupling: ground-truth coupling constant alpha
    :return: external cable tensions (N), shape (3,)
    """
    reaction = -np.asarray(force_on_tip, dtype=float)
    return (4.0 / (3.0 * coupling)) * (TIP_PLANE_MATRIX.T @ reaction)


def contact_force(tip, tube):
    """
    Penalty force of the tube wall on the tip.

    :param tip: tip position (mm)
    :param tube: `TubeGeometry`
    :return: force (N) pointing from the wall toward the centreline; zero without penetration
    """
    tip = np.asarray(tip, dtype=float)
    a = tube.centerline[:-1]
    b = tube.centerline[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    u = np.einsum("ij,ij->i", tip - a, ab) / np.where(seg_len2 > 0, seg_len2, 1.0)
    u = np.clip(u, 0.0, 1.0)
    nearest = a + u[:, None] * ab
    offsets = tip - nearest
    dists = np.linalg.norm(offsets, axis=1)
    i = int(np.argmin(dists))

    depth = dists[i] - tube.inner_radius
    if depth <= 0:
        return np.zeros(2)
    return -tube.contact_stiffness * depth * offsets[i] / dists[i]


def tube_contact(tip, tube, coupling):
    """
    External cable tensions caused by contact between the tip and a tube.

    :param tip: tip position (mm)
    :param tube: `TubeGeometry`
    :param coupling: plant ground-truth coupling constant alpha
    :return: external cable tensions (N), shape (3,)
    """
    return tip_load_tensions(contact_force(tip, tube), coupling)


def wall_contact(tip, point, normal, stiffness):
    """
    Penalty force of a flat wall (the impulse block) on the tip.

    :param tip: tip position (mm)
    :param point: any point on the wall surface
    :param normal: unit normal pointing from the wall into free space
    :param stiffness: penalty stiffness (N/mm)
    :return: force (N) on the tip along `normal`
    """
    normal = np.asarray(normal, dtype=float)
    depth = -float(np.dot(np.asarray(tip, dtype=float) - point, normal))
    if depth <= 0:
        return np.zeros(2)
    return stiffness * depth * normal


class SimulatedPlant:
    """
    Stateful wrapper owning one plant instance.

    :param cfg: `PlantConfig`
    :param q0: optional initial cable positions
    """

    def __init__(self, cfg, q0=None):
        self.cfg = cfg
        self.state = initial_state(cfg, q0)

    def step(self, cmd, ext_tension=None):
        """
        Advance one control tick.

        :param cmd: commanded cable positions (mm)
        :param ext_tension: external cable tensions (N)
        :return: `SensorFrame`
        """
        self.state, frame = plant_step(self.state, self.cfg, cmd, ext_tension)
        return frame

    def reset(self, q0=None):
        """Return to rest at `q0`, continuing the same random stream."""
        self.state = initial_state(self.cfg, q0, rng=self.state.rng)

    @property
    def cable_pos(self):
        return self.state.cable_pos.copy()

    @property
    def tip_pose(self):
        return self.state.tip_pose.copy()

    @property
    def time(self):
        return self.state.time
