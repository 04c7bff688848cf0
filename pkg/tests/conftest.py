import numpy as np
import pandas as pd
import pytest

from constants import DATASET_COLUMNS
from compliance_core import scenarios
from compliance_core.config import PlantConfig, ControllerConfig, ExplorerConfig, TrainConfig
from compliance_core.robotsim import SimulatedPlant, static_tension


class TwinPlant(SimulatedPlant):
    """Plant that also drives a noise-free, unloaded copy of itself with every command."""

    latest = None

    def __init__(self, cfg, q0=None):
        super().__init__(cfg, q0)
        self.twin = SimulatedPlant(cfg.model_copy(update={"noise_std": 0.0}), q0)
        self.internal = self.twin.state.filter_state.copy()
        TwinPlant.latest = self

    def step(self, cmd, ext_tension=None):
        self.internal = self.twin.step(cmd).tension
        return super().step(cmd, ext_tension)

    def reset(self, q0=None):
        super().reset(q0)
        self.twin.reset(q0)
        self.internal = self.twin.state.filter_state.copy()


class TwinPredictor:
    """Perfect internal-tension oracle reading the most recent `TwinPlant`."""

    def __init__(self, window_length=5):
        self.window_length = window_length
        self.history = []

    def predict(self, window_mm):
        return TwinPlant.latest.internal.copy()


class StaticPredictor:
    """Predicts the static stiffness tension of the newest command."""

    def __init__(self, plant_cfg, window_length=5):
        self.plant_cfg = plant_cfg
        self.window_length = window_length
        self.history = []

    def predict(self, window_mm):
        return static_tension(self.plant_cfg, np.asarray(window_mm, dtype=float)[0])


class ConstantPredictor:
    def __init__(self, value, window_length=3):
        self.value = np.asarray(value, dtype=float)
        self.window_length = window_length

    def predict(self, window_mm):
        return self.value.copy()


@pytest.fixture
def plant_cfg():
    """Noise-free plant with default dynamics."""
    return PlantConfig(noise_std=0.0)


@pytest.fixture
def ctrl_cfg():
    return ControllerConfig(window_length=5)


@pytest.fixture
def twin_predictor(monkeypatch):
    """Oracle predictor; scenario plants are created as `TwinPlant`."""
    monkeypatch.setattr(scenarios, "SimulatedPlant", TwinPlant)
    return TwinPredictor(window_length=5)


@pytest.fixture
def small_train_cfg():
    return TrainConfig(
        hidden=8, fc_size=8, window=10, cnn_layers=2, cnn_kernel=3, cnn_filters=4,
        batch_size=16, epochs=3, windows_per_epoch=64, eval_windows=64,
    )


@pytest.fixture
def explorer_cfg():
    return ExplorerConfig(duration=5.0, epoch_length=2.0, loess_neighbors=5)


def linear_dataset(rows=600, sessions=1, seed=0):
    """Dataset whose tensions are a fixed linear map of the commands, no noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(rows) * 0.01
    phase = rng.uniform(0, 2 * np.pi, 3)
    q = 25.0 + 5.0 * np.sin(2 * np.pi * 0.3 * t[:, None] + phase[None, :])
    A = np.array([[0.3, 0.05, 0.0], [0.0, 0.3, 0.05], [0.05, 0.0, 0.3]])
    T = q @ A.T
    session = np.repeat(np.arange(sessions), int(np.ceil(rows / sessions)))[:rows]
    return pd.DataFrame(np.column_stack([t, q, T, session]), columns=DATASET_COLUMNS).astype({"session": int})


@pytest.fixture
def linear_df():
    return linear_dataset()


@pytest.fixture
def make_dataset():
    return linear_dataset
