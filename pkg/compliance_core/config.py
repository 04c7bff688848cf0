"""
Experiment configuration.

Every section of the TOML config file maps to a pydantic model whose defaults
are the desk-scale values used throughout the lab. Validators enforce the
invariants of each component so a bad file fails before any simulation starts.
"""
import logging
from pathlib import Path

import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from constants import (
    ACTUATION_RANGE_MM, FORCE_CAP_N, SAMPLE_RATE_FAST, CONTROL_RATE, REFERENCE_ALPHA,
    DATASET_FILE, CHECKPOINT_FILE, OUTPUT_DIR, MODEL_KINDS,
    COMPARE_KINDS, COMPARE_SIZES, COMPARE_WINDOWS, EXCEEDANCE_THRESHOLDS,
)
from compliance_core.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class PlantConfig(_Section):
    """Simulated plant parameters (tension in N, positions in mm)."""

    stiffness_curve: list[tuple[float, float]] = [
        (0.0, 0.0), (5.0, 0.5), (15.0, 3.0), (30.0, 8.0), (45.0, 15.0), (63.0, 30.0),
    ]
    hysteresis_width: float = 0.4
    hysteresis_blend: float = 0.5
    overshoot_gain: float = 0.08
    restitution_tau: float = 0.15
    viscous_coeff: float = 0.04
    noise_std: float = 0.05
    actuator_rate_limit: float = 25.0
    actuation_range: float = ACTUATION_RANGE_MM
    force_cap: float = FORCE_CAP_N
    sample_rate_fast: int = SAMPLE_RATE_FAST
    control_rate: int = CONTROL_RATE
    tip_coupling: float = REFERENCE_ALPHA
    pose_scale: float = 1.0
    initial_pos: tuple[float, float, float] = (25.0, 25.0, 25.0)
    rng_seed: int = 0

    @field_validator("stiffness_curve")
    @classmethod
    def _monotone_curve(cls, curve):
        if len(curve) < 2:
            raise ValueError("stiffness_curve needs at least two points")
        xs = [p[0] for p in curve]
        ys = [p[1] for p in curve]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("stiffness_curve extensions must be strictly increasing")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValueError("stiffness_curve tensions must be non-decreasing")
        return curve

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.hysteresis_width < 0:
            raise ValueError("hysteresis_width must be >= 0")
        if self.restitution_tau <= 0 or self.hysteresis_blend <= 0:
            raise ValueError("restitution_tau and hysteresis_blend must be > 0")
        if self.noise_std < 0 or self.viscous_coeff < 0 or self.overshoot_gain < 0:
            raise ValueError("noise_std, viscous_coeff and overshoot_gain must be >= 0")
        if self.force_cap <= 0 or self.actuation_range <= 0 or self.actuator_rate_limit <= 0:
            raise ValueError("force_cap, actuation_range and actuator_rate_limit must be > 0")
        if self.control_rate <= 0 or self.sample_rate_fast % self.control_rate != 0:
            raise ValueError("control_rate must divide sample_rate_fast")
        if self.tip_coupling <= 0 or self.pose_scale <= 0:
            raise ValueError("tip_coupling and pose_scale must be > 0")
        if any(not 0 <= q <= self.actuation_range for q in self.initial_pos):
            raise ValueError("initial_pos must lie within the actuation range")
        return self

    @property
    def substeps(self):
        """Fast-rate samples per control tick."""
        return self.sample_rate_fast // self.control_rate


class ExplorerConfig(_Section):
    """Data collection: tension surface, motion styles and session length."""

    duration: float = 1200.0
    target_range: tuple[float, float] = (2.0, 12.0)
    c_step: float = 0.2
    c_bias_decay: float = 0.98
    loess_neighbors: int = 25
    loess_degree: int = 1
    grid_tolerance: float = 0.5
    x_range: tuple[float, float] = (-12.0, 12.0)
    y_range: tuple[float, float] = (-12.0, 12.0)
    arrival_fraction: float = 0.02
    epoch_length: float = 20.0
    velocity_range: tuple[float, float] = (2.0, 20.0)
    jerkiness_range: tuple[float, float] = (0.0, 6.0)
    pause_probability_range: tuple[float, float] = (0.0, 0.02)
    pause_duration_range: tuple[float, float] = (0.2, 1.5)
    safe_pose: tuple[float, float, float] = (25.0, 25.0, 25.0)
    split_fraction: float = 0.8
    rng_seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self):
        lo, hi = self.target_range
        if not 0 < lo < hi:
            raise ValueError("target_range must satisfy 0 < low < high")
        if self.loess_degree not in (0, 1):
            raise ValueError("loess_degree must be 0 or 1")
        if self.loess_neighbors < 3:
            raise ValueError("loess_neighbors must be >= 3")
        if self.velocity_range[0] <= 0 or self.jerkiness_range[0] < 0:
            raise ValueError("velocities must be > 0 and jerkiness >= 0")
        p_lo, p_hi = self.pause_probability_range
        if not 0 <= p_lo <= p_hi <= 1:
            raise ValueError("pause probabilities must lie in [0, 1]")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.duration <= 0 or self.epoch_length <= 0:
            raise ValueError("duration and epoch_length must be > 0")
        return self


class TrainConfig(_Section):
    """Sequence model hyperparameters and the SGD schedule."""

    model_kind: str = "lstm"
    hidden: int = 32
    window: int = 100
    fc_size: int = 32
    cnn_layers: int = 3
    cnn_kernel: int = 32
    cnn_filters: int = 32
    learning_rate: float = 0.005
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 100
    windows_per_epoch: int = 2048
    eval_windows: int = 1024
    rng_seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must satisfy 0 <= momentum < 1")
        if min(self.hidden, self.window, self.batch_size, self.epochs, self.fc_size) < 1:
            raise ValueError("hidden, window, batch_size, epochs and fc_size must be >= 1")
        return self


class ControllerConfig(_Section):
    """Deadband-proportional compliance controller."""

    lam: float = Field(default=0.5, alias="lambda")
    beta: float = 2.0
    rate: int = CONTROL_RATE
    window_length: int = 100
    velocity_cap: float = 10.0
    tick_budget: float = 0.01
    enforce_tick_budget: bool = False
    lambda_from_checkpoint: bool = True

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.lam <= 0 or self.beta <= 0 or self.velocity_cap <= 0:
            raise ValueError("lambda, beta and velocity_cap must be > 0")
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")
        return self


class PathsConfig(_Section):
    dataset: str = str(DATASET_FILE)
    checkpoint: str = str(CHECKPOINT_FILE)
    output_dir: str = str(OUTPUT_DIR)


class RateStaticsConfig(_Section):
    speeds: list[float] = [1.0, 2.5, 10.0]
    cable: int = 0
    start: float = 20.0
    amplitude: float = 10.0
    cycles: int = 2
    dwell: float = 1.0


class CompareConfig(_Section):
    kinds: list[str] = COMPARE_KINDS
    sizes: list[int] = COMPARE_SIZES
    windows: list[int] = COMPARE_WINDOWS
    seeds: list[int] = [0, 1, 2]
    epochs: int = 100
    workers: int = 1


class ImpulseConfig(_Section):
    trials: int = 20
    magnitude_range: tuple[float, float] = (2.0, 4.0)
    wall_stiffness: float = 2.0
    settle: float = 1.5
    hold: float = 3.0
    pose: tuple[float, float, float] = (25.0, 25.0, 25.0)
    noise_std: float | None = 0.0


class InsertConfig(_Section):
    cycles: int = 10
    inner_radius: float = 13.0
    contact_stiffness: float = 2.0
    depth: float = 50.0
    advance_speed: float = 29.0
    lateral_offset: float = 20.0
    bend_direction: float = 90.0
    dwell: float = 0.5
    thresholds: list[float] = EXCEEDANCE_THRESHOLDS
    controller_enabled: bool = True
    pose: tuple[float, float, float] = (25.0, 25.0, 25.0)
    section_step: float = 1.0
    noise_std: float | None = None


class CalibrateConfig(_Section):
    """Coin-weight calibration of the tip coupling constant."""

    poses: list[tuple[float, float, float]] = [
        (35.0, 35.0, 35.0), (39.0, 33.0, 33.0), (32.0, 37.0, 37.0),
    ]
    load_directions_deg: list[float] = [270.0, 30.0, 150.0]
    weights_g: list[float] = [0.0, 27.0, 54.0, 108.0, 162.0]
    repetitions: int = 6
    settle: float = 1.5
    average: float = 1.0
    tare: bool = True

    @model_validator(mode="after")
    def _check_ranges(self):
        if len(self.load_directions_deg) != len(self.poses):
            raise ValueError("load_directions_deg needs one direction per pose")
        if any(w < 0 for w in self.weights_g):
            raise ValueError("weights_g must be >= 0")
        if self.repetitions < 1 or self.average <= 0 or self.settle < 0:
            raise ValueError("repetitions must be >= 1, average > 0 and settle >= 0")
        return self


class ExperimentConfig(_Section):
    """Fully-resolved configuration of one lab run."""

    scenario: str = "default"
    seed: int = 0
    duration: float | None = None
    plant: PlantConfig = PlantConfig()
    explorer: ExplorerConfig = ExplorerConfig()
    train: TrainConfig = TrainConfig()
    controller: ControllerConfig = ControllerConfig()
    paths: PathsConfig = PathsConfig()
    rate_statics: RateStaticsConfig = RateStaticsConfig()
    compare: CompareConfig = CompareConfig()
    impulse: ImpulseConfig = ImpulseConfig()
    insert: InsertConfig = InsertConfig()
    calibrate: CalibrateConfig = CalibrateConfig()

    @model_validator(mode="after")
    def _rates_consistent(self):
        if self.controller.rate != self.plant.control_rate:
            raise ValueError("controller.rate must equal plant.control_rate")
        return self

    def with_seed(self, seed):
        """
        Return a copy with every seed field set to `seed`.

        :param seed: integer seed
        :return: new `ExperimentConfig`
        """
        return self.model_copy(update={
            "seed": seed,
            "plant": self.plant.model_copy(update={"rng_seed": seed}),
            "explorer": self.explorer.model_copy(update={"rng_seed": seed}),
            "train": self.train.model_copy(update={"rng_seed": seed}),
        })


def load_config(path=None, seed=None):
    """
    Load an experiment config from a TOML file, falling back to defaults.

    :param path: optional Path to a TOML file; `None` uses built-in defaults
    :param seed: optional seed overriding every seed field
    :raises ConfigError: if the file is missing, unparsable or invalid
    :return: `ExperimentConfig`
    """
    data = {}
    if path is not None:
        path = Path(path)
        try:
            data = toml.load(path)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except (toml.TomlDecodeError, OSError) as e:
            raise ConfigError(f"Failed to read config {path}: {e}") from e

    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e

    if seed is not None:
        cfg = cfg.with_seed(int(seed))
    logging.debug("Loaded config (scenario=%s, seed=%s)", cfg.scenario, cfg.seed)
    return cfg


def dump_config(cfg):
    """
    Render a config as TOML text.

    :param cfg: `ExperimentConfig`
    :return: TOML string with every section and default spelled out
    """
    data = cfg.model_dump(by_alias=True, exclude_none=True)
    return toml.dumps(data)
