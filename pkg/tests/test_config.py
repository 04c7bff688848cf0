from pathlib import Path

import pytest
from pydantic import ValidationError

from compliance_core.config import (
    CalibrateConfig, ControllerConfig, ExplorerConfig, PlantConfig, TrainConfig, dump_config, load_config,
)
from compliance_core.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text):
    path = tmp_path / "lab.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults():
    cfg = load_config()
    assert cfg.controller.lam == 0.5
    assert cfg.controller.beta == 2.0
    assert cfg.plant.substeps == 200
    assert cfg.plant.noise_std == 0.05
    assert cfg.train.model_kind == "lstm"
    assert cfg.train.window == 100
    assert cfg.insert.inner_radius == 13.0


def test_toml_overrides(tmp_path):
    path = write(tmp_path, 'scenario = "bench"\n[controller]\nlambda = 0.8\n[train]\nhidden = 16\n')
    cfg = load_config(path)
    assert cfg.scenario == "bench"
    assert cfg.controller.lam == 0.8
    assert cfg.train.hidden == 16
    assert cfg.train.window == 100


@pytest.mark.parametrize("text", [
    "[controller]\nbeta = -1.0\n",
    "[controller]\nrate = 50\n",
    "[train]\nmodel_kind = \"gru\"\n",
    "[plant]\nunknown_knob = 1\n",
    "[explorer]\nsplit_fraction = 1.0\n",
])
def test_invalid_values_raise_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[controller\nlambda = "))


def test_seed_override_reaches_every_component():
    cfg = load_config(seed=7)
    assert cfg.seed == 7
    assert cfg.plant.rng_seed == cfg.explorer.rng_seed == cfg.train.rng_seed == 7
    assert load_config().with_seed(7) == cfg


def test_dump_config_round_trip(tmp_path):
    cfg = load_config(seed=3)
    text = dump_config(cfg)
    assert "lambda = 0.5" in text
    assert load_config(write(tmp_path, text)) == cfg


def test_quick_config_loads():
    cfg = load_config(CONFIG_DIR / "quick.toml")
    assert cfg.scenario == "quick"
    assert cfg.train.epochs == 15


def test_plant_validation():
    with pytest.raises(ValidationError):
        PlantConfig(stiffness_curve=[(0.0, 0.0), (0.0, 1.0)])
    with pytest.raises(ValidationError):
        PlantConfig(stiffness_curve=[(0.0, 2.0), (10.0, 1.0)])
    with pytest.raises(ValidationError):
        PlantConfig(control_rate=300)
    with pytest.raises(ValidationError):
        PlantConfig(initial_pos=(70.0, 25.0, 25.0))


def test_section_validation():
    with pytest.raises(ValidationError):
        ExplorerConfig(target_range=(12.0, 2.0))
    with pytest.raises(ValidationError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValidationError):
        ControllerConfig(velocity_cap=0.0)
    with pytest.raises(ValidationError):
        CalibrateConfig(load_directions_deg=[0.0])
