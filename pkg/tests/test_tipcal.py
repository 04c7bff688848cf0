import math

import numpy as np
import pytest

from constants import REFERENCE_ALPHA
from compliance_core.config import CalibrateConfig, PlantConfig
from compliance_core.robotsim import SimulatedPlant, tip_load_tensions
from compliance_core.tipcal import (
    CALIBRATION_COLUMNS, CalibTrial, calibration_report, coin_force, fit_alpha, run_calibration, tip_force,
)
from conftest import StaticPredictor


def test_equal_tensions_have_no_tip_force():
    f = tip_force([4.0, 4.0, 4.0], 1 / 3)
    assert f.fx == pytest.approx(0.0, abs=1e-12)
    assert f.fy == pytest.approx(0.0, abs=1e-12)


def test_tip_force_example():
    f = tip_force([0.0, 0.0, 2.0], 1 / 3)
    assert f.fx == pytest.approx(math.sqrt(3) / 6)
    assert f.fy == pytest.approx(-1 / 6)
    assert f.magnitude == pytest.approx(1 / 3)


def test_tip_force_is_linear():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=3), rng.normal(size=3)
    lhs = tip_force(2.0 * a - b, 0.4).as_array()
    rhs = 2.0 * tip_force(a, 0.4).as_array() - tip_force(b, 0.4).as_array()
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_tip_force_rejects_bad_alpha():
    with pytest.raises(ValueError):
        tip_force([1.0, 0.0, 0.0], 0.0)


@pytest.mark.parametrize("load", [(1.0, 0.0), (0.0, -2.0), (0.3, 0.7)])
def test_tip_force_reports_the_reaction(load):
    T = tip_load_tensions(load, REFERENCE_ALPHA)
    np.testing.assert_allclose(tip_force(T, REFERENCE_ALPHA).as_array(), -np.asarray(load), atol=1e-12)


def test_coin_force():
    assert coin_force(1) == pytest.approx(0.0883, abs=1e-4)
    assert coin_force(0) == 0.0


def synthetic_trials(alpha, weights=(27.0, 54.0, 108.0), directions=(270.0, 30.0, 150.0)):
    trials = []
    for pose_id, deg in enumerate(directions):
        d = np.array([math.cos(math.radians(deg)), math.sin(math.radians(deg))])
        for w in weights:
            force = w / 1000.0 * 9.81
            T = tip_load_tensions(force * d, alpha)
            trials.append(CalibTrial(pose_id, force, tuple(d), tuple(T), weight_g=w))
    return trials


def test_fit_alpha_recovers_coupling():
    alpha, residual = fit_alpha(synthetic_trials(1 / 3))
    assert alpha == pytest.approx(1 / 3, rel=1e-12)
    assert residual == pytest.approx(0.0, abs=1e-12)


def test_fit_alpha_needs_two_loaded_trials():
    trials = synthetic_trials(1 / 3, weights=(0.0, 27.0), directions=(270.0,))
    with pytest.raises(ValueError):
        fit_alpha(trials)


def test_fit_alpha_rejects_flat_measurements():
    trials = [CalibTrial(0, 1.0, (1.0, 0.0), (2.0, 2.0, 2.0)), CalibTrial(0, 2.0, (1.0, 0.0), (3.0, 3.0, 3.0))]
    with pytest.raises(ValueError):
        fit_alpha(trials)


def test_trial_rejects_negative_force():
    with pytest.raises(ValueError):
        CalibTrial(0, -1.0, (1.0, 0.0), (0.0, 0.0, 0.0))


def small_calibration():
    return CalibrateConfig(
        poses=[(35.0, 35.0, 35.0), (39.0, 33.0, 33.0)],
        load_directions_deg=[270.0, 30.0],
        weights_g=[0.0, 54.0, 162.0],
        repetitions=1,
        settle=0.2,
        average=0.1,
    )


def test_calibration_recovers_plant_coupling():
    plant_cfg = PlantConfig(noise_std=0.0)
    plant = SimulatedPlant(plant_cfg)
    trials = run_calibration(plant, StaticPredictor(plant_cfg), small_calibration())
    assert len(trials) == 6
    alpha, _ = fit_alpha(trials)
    assert alpha == pytest.approx(plant_cfg.tip_coupling, rel=0.05)


@pytest.mark.slow
def test_calibration_recovers_coupling_under_sensor_noise():
    plant_cfg = PlantConfig(noise_std=0.05, rng_seed=11)
    cfg = CalibrateConfig()
    trials = run_calibration(SimulatedPlant(plant_cfg), StaticPredictor(plant_cfg), cfg)
    assert len(trials) == len(cfg.poses) * len(cfg.weights_g) * cfg.repetitions
    alpha, _ = fit_alpha(trials)
    assert alpha == pytest.approx(plant_cfg.tip_coupling, rel=0.05)


def test_calibration_discards_capped_trials():
    plant_cfg = PlantConfig(noise_std=0.0, force_cap=12.0)
    plant = SimulatedPlant(plant_cfg)
    cfg = small_calibration().model_copy(update={"tare": False})
    trials = run_calibration(plant, StaticPredictor(plant_cfg), cfg)
    # The 39 mm pose rests above the cap
    assert {t.pose_id for t in trials} == {0}


def test_calibration_report():
    trials = synthetic_trials(0.3)
    alpha, residual = fit_alpha(trials)
    df, summary = calibration_report(trials, alpha, residual, alpha_true=0.3)
    assert list(df.columns) == CALIBRATION_COLUMNS
    assert len(df) == len(trials)
    np.testing.assert_allclose(df["Fx_fit"], df["Fx_applied"], atol=1e-9)
    np.testing.assert_allclose(df["F_fit_N"], df["applied_N"], atol=1e-9)
    assert summary["trials"] == len(trials)
    assert summary["inverse_alpha"] == pytest.approx(1 / 0.3)
    assert summary["relative_error"] == pytest.approx(0.0, abs=1e-9)
