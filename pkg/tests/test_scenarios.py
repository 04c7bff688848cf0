import math

import numpy as np
import pandas as pd
import pytest

from constants import Q_COLUMNS, T_COLUMNS
from compliance_core.config import ImpulseConfig, InsertConfig, RateStaticsConfig
from compliance_core.errors import PlantFaultError
from compliance_core.scenarios import (
    FEXT_COLUMNS, align_impulses, exceedance_histogram, impulse, impulse_audit, insertion,
    insertion_depths, insertion_histogram, mean_aligned_trace, rate_statics, triangle_wave,
    trigger_index, tube_offset,
)

DT = 0.01


def test_triangle_wave_shape():
    path = triangle_wave(0.0, 10.0, 5.0, 1, 0.5, 0.1)
    assert len(path) == 56
    assert path[0] == path[-1] == 0.0
    assert path.max() == pytest.approx(10.0)
    assert np.abs(np.diff(path)).max() == pytest.approx(0.5)
    assert np.all(path[:5] == 0.0)


def test_exceedance_histogram_counts_strictly_above():
    hist = exceedance_histogram([0.0, 1.0, 2.0, 3.0, 4.0], [0.5, 2.0, 10.0], DT)
    np.testing.assert_allclose(hist, [0.04, 0.02, 0.0])


def test_exceedance_histogram_is_non_increasing():
    rng = np.random.default_rng(0)
    hist = exceedance_histogram(rng.uniform(0, 10, 500), np.linspace(0, 10, 21), DT)
    assert np.all(np.diff(hist) <= 0)


def test_trigger_index():
    f = np.zeros((6, 3))
    assert trigger_index(f, 0.5) is None
    f[3, 2] = -0.6
    f[4, 0] = 2.0
    assert trigger_index(f, 0.5) == 3


def test_align_impulses_drops_untriggered_traces():
    t = np.arange(5) * DT
    quiet = pd.DataFrame({"t": t, "Fext1": 0.0, "Fext2": 0.0, "Fext3": 0.0})
    loud = quiet.copy()
    loud.loc[2:, "Fext1"] = 1.0
    aligned = align_impulses([quiet, loud], 0.5)
    assert len(aligned) == 1
    idx, trace = aligned[0]
    assert idx == 2
    assert trace["t_aligned"].iloc[2] == 0.0


def decaying_trace(peak, tau, lam=0.5, lead=10, ticks=400):
    k = np.arange(ticks)
    f = np.where(k < lead, 0.0, peak * np.exp(-(k - lead) * DT / tau))
    return f


def test_impulse_audit_passes_fast_decay():
    f = decaying_trace(3.0, 0.3)
    trigger = trigger_index(f[:, None], 0.5)
    assert trigger == 10
    result = impulse_audit(f, trigger, 0.5, DT, tolerance=0.0)
    # 3 exp(-t / 0.3) <= 0.5 first holds at t = 0.54 s
    assert result["time_to_deadband"] == pytest.approx(0.54)
    assert result["peak_excess"] == pytest.approx(2.5)
    assert result["excess_removed"] > 0.9
    assert result["passed"]


def test_impulse_audit_fails_slow_decay():
    f = decaying_trace(3.0, 5.0)
    result = impulse_audit(f, 10, 0.5, DT)
    assert math.isinf(result["time_to_deadband"])
    assert result["excess_removed"] < 0.5
    assert not result["passed"]


def test_impulse_audit_tolerance_counts_asymptotic_approach():
    f = np.concatenate([np.zeros(10), 0.5 + 2.0 * np.exp(-np.arange(300) * DT / 0.1)])
    assert math.isinf(impulse_audit(f, 10, 0.5, DT, tolerance=0.0)["time_to_deadband"])
    assert impulse_audit(f, 10, 0.5, DT)["passed"]


def test_rate_statics_sweeps_one_cable(plant_cfg):
    cfg = RateStaticsConfig(speeds=[5.0, 10.0], amplitude=5.0, cycles=1, dwell=0.2)
    df = rate_statics(plant_cfg, cfg)
    assert list(df.columns) == ["speed", "t", *Q_COLUMNS, *T_COLUMNS]
    for speed, group in df.groupby("speed"):
        assert len(group) == len(triangle_wave(20.0, 5.0, speed, 1, 0.2, DT))
        assert group["q1"].max() == pytest.approx(25.0)
    assert np.all(df[["q2", "q3"]].to_numpy() == 20.0)
    assert df["T1"].max() > df["T2"].max()


def test_rate_statics_force_cap(plant_cfg):
    capped = plant_cfg.model_copy(update={"force_cap": 5.0})
    with pytest.raises(PlantFaultError):
        rate_statics(capped, RateStaticsConfig(speeds=[10.0], amplitude=5.0, cycles=1, dwell=0.2))


def test_tube_offset_profile():
    cfg = InsertConfig()
    assert tube_offset(0.0, cfg) == pytest.approx(0.0)
    assert tube_offset(cfg.depth / 2, cfg) == pytest.approx(cfg.lateral_offset / 2)
    assert tube_offset(cfg.depth, cfg) == pytest.approx(cfg.lateral_offset)
    assert tube_offset(2 * cfg.depth, cfg) == pytest.approx(cfg.lateral_offset)
    assert tube_offset(-1.0, cfg) == pytest.approx(0.0)


def test_insertion_depths():
    cfg = InsertConfig(cycles=2, depth=10.0, advance_speed=10.0, dwell=0.5)
    s = insertion_depths(cfg, DT)
    assert len(s) == 601
    assert s.max() == pytest.approx(10.0)
    assert s[0] == s[-1] == 0.0
    assert s[120] == pytest.approx(10.0)


@pytest.mark.slow
def test_impulse_responses_return_to_deadband(plant_cfg, ctrl_cfg, twin_predictor):
    cfg = ImpulseConfig(trials=3, settle=0.2, hold=1.5)
    traces, summary = impulse(plant_cfg, twin_predictor, ctrl_cfg, cfg, seed=1)
    assert len(traces) == 3 * 150
    assert summary["cable"].tolist() == [1, 2, 3]
    assert summary["magnitude"].between(2.0, 4.0).all()
    assert summary["trigger_index"].notna().all()
    assert not summary["fault"].any()
    assert summary["passed"].all()
    assert set(FEXT_COLUMNS + ["wall_force", "tip_force_est"]) <= set(traces.columns)

    mean = mean_aligned_trace(traces, ctrl_cfg.lam)
    assert mean["trials"].max() == 3
    assert mean.loc[mean["t_aligned"] == 0.0, "mean"].iloc[0] > 0.0


@pytest.mark.slow
def test_impulse_is_deterministic(plant_cfg, ctrl_cfg, twin_predictor):
    cfg = ImpulseConfig(trials=2, settle=0.2, hold=0.5)
    runs = []
    a, _ = impulse(plant_cfg, twin_predictor, ctrl_cfg, cfg, seed=3, telemetry=runs)
    b, _ = impulse(plant_cfg, twin_predictor, ctrl_cfg, cfg, seed=3)
    assert a.equals(b)

    assert [len(ticks) for ticks in runs] == [50, 50]
    commands = np.array([tk.command for ticks in runs for tk in ticks])
    np.testing.assert_array_equal(commands, a[Q_COLUMNS].to_numpy())


@pytest.mark.slow
def test_insertion_controller_reduces_contact(plant_cfg, ctrl_cfg, twin_predictor):
    cfg = InsertConfig(cycles=1)
    on, on_summary = insertion(plant_cfg, twin_predictor, ctrl_cfg, cfg, enabled=True)
    off, off_summary = insertion(plant_cfg, twin_predictor, ctrl_cfg, cfg, enabled=False)

    assert not on_summary["aborted"] and not off_summary["aborted"]
    assert on_summary["ticks"] == off_summary["ticks"] == len(insertion_depths(cfg, DT))
    assert off_summary["peak_contact_force"] > 5.0
    assert on_summary["peak_contact_force"] < off_summary["peak_contact_force"]
    assert (off["status"] != "ok").all()

    thresholds = [1.0, 2.0, 5.0]
    hist_on = insertion_histogram(on, thresholds, DT)
    hist_off = insertion_histogram(off, thresholds, DT)
    assert list(hist_on.columns) == ["1", "2", "5"]
    assert list(hist_on.index) == [0, "mean"]
    assert np.all(np.diff(hist_on.loc["mean"].to_numpy()) <= 0)
    assert hist_on.loc["mean", "2"] <= hist_off.loc["mean", "2"]
