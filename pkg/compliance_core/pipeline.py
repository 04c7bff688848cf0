"""
End-to-end lab commands.

Each `run_*` function resolves its inputs from the experiment config, runs
one stage (collection, training, evaluation, comparison or a scenario) and
writes its artifacts. The CLI is a thin wrapper over these functions.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from constants import TELEMETRY_COLUMNS
from compliance_core.compliance import select_lambda
from compliance_core.data_io import (
    save_dataset, load_dataset, save_checkpoint, load_checkpoint, write_csv, telemetry_frame,
)
from compliance_core.errors import LabError, ReceptiveFieldError, TrainingDivergedError
from compliance_core.explorer import StyleRanges, collect, split, dataset_summary
from compliance_core.io_utils import safe_write_json
from compliance_core.robotsim import SimulatedPlant
from compliance_core.scenarios import (
    rate_statics, impulse, mean_aligned_trace, insertion, insertion_histogram,
)
from compliance_core.tipcal import run_calibration, fit_alpha, calibration_report
from compliance_core.training import train, evaluate

RATE_STATICS_FILE = "rate_statics.csv"
HISTORY_FILE = "train_history.csv"
EVAL_FILE = "eval.json"
COMPARE_GRID_FILE = "compare_grid.csv"
COMPARE_SEEDS_FILE = "compare_seeds.csv"
IMPULSE_TRACES_FILE = "impulse_traces.csv"
IMPULSE_SUMMARY_FILE = "impulse_trials.csv"
IMPULSE_MEAN_FILE = "impulse_mean.csv"
IMPULSE_REPORT_FILE = "impulse.json"
IMPULSE_TELEMETRY_FILE = "impulse_telemetry.csv"
INSERT_TRACES_FILE = "insert_traces.csv"
INSERT_ABLATION_FILE = "insert_ablation.csv"
INSERT_HISTOGRAM_FILE = "insert_histogram.csv"
INSERT_REPORT_FILE = "insert.json"
INSERT_TELEMETRY_FILE = "insert_telemetry.csv"
CALIBRATION_FILE = "calibration_trials.csv"
CALIBRATION_REPORT_FILE = "calibration.json"
SUMMARY_FILE = "dataset_summary.csv"


@dataclass(frozen=True)
class ArtifactPaths:
    dataset: Path
    checkpoint: Path
    output_dir: Path

    def output(self, name):
        return self.output_dir / name


def artifact_paths(cfg, out=None):
    """
    Where a run reads and writes its artifacts.

    With `out`, the dataset, checkpoint and results all live in that directory;
    otherwise the `[paths]` section decides.

    :param cfg: `ExperimentConfig`
    :param out: optional output directory
    :return: `ArtifactPaths`
    """
    if out is not None:
        out = Path(out)
        return ArtifactPaths(out / "dataset.csv", out / "predictor.json", out)
    return ArtifactPaths(Path(cfg.paths.dataset), Path(cfg.paths.checkpoint), Path(cfg.paths.output_dir))


def controller_config(cfg, predictor):
    """
    Controller settings matched to a predictor.

    The window length follows the predictor; with `lambda_from_checkpoint` and a
    recorded history the deadband is 1.25x the last validation mean error.

    :return: `ControllerConfig`
    """
    update = {"window_length": predictor.window_length}
    if cfg.controller.lambda_from_checkpoint and predictor.history:
        update["lam"] = select_lambda(predictor.history[-1]["val_error"])
        logging.info("Deadband from checkpoint: lambda = %.4f N", update["lam"])
    return cfg.controller.model_copy(update=update)


def run_collect(cfg, paths):
    """
    Collect an unloaded exploration dataset.

    :return: DataFrame written to `paths.dataset`
    """
    plant = SimulatedPlant(cfg.plant, q0=cfg.explorer.safe_pose)
    duration = cfg.duration if cfg.duration is not None else cfg.explorer.duration
    df = collect(plant, duration, StyleRanges.from_config(cfg.explorer), cfg.explorer.target_range, cfg.explorer)
    save_dataset(df, paths.dataset)
    write_csv(dataset_summary(df).reset_index(), paths.output(SUMMARY_FILE), units="# units: t=s, T=N")
    return df


def _splits(cfg, paths):
    df = load_dataset(paths.dataset)
    return split(df, cfg.explorer.split_fraction)


def run_train(cfg, paths):
    """
    Train the configured model and write the checkpoint and history.

    :return: `TensionPredictor`
    """
    train_df, val_df = _splits(cfg, paths)
    predictor, history = train(cfg.train.model_kind, train_df, val_df, cfg.train)
    save_checkpoint(predictor, paths.checkpoint)
    write_csv(pd.DataFrame(history), paths.output(HISTORY_FILE), units="# units: train_error=N, val_error=N")
    return predictor


def run_eval(cfg, paths):
    """
    Evaluate a checkpoint on both splits.

    :return: dict of metrics, also written as JSON
    """
    predictor = load_checkpoint(paths.checkpoint)
    train_df, val_df = _splits(cfg, paths)
    val_error = evaluate(predictor, val_df)
    report = {
        "kind": predictor.kind,
        "window": predictor.window_length,
        "train_error": evaluate(predictor, train_df),
        "val_error": val_error,
        "val_tension_std": [float(s) for s in val_df[["T1", "T2", "T3"]].std(ddof=0)],
        "lambda": select_lambda(val_error),
    }
    safe_write_json(paths.output(EVAL_FILE), report)
    logging.info("Validation mean error %.4f N (lambda %.4f N)", val_error, report["lambda"])
    return report


def compare_cell(kind, size, window, seed, train_df, val_df, train_cfg):
    """
    Train and evaluate one grid cell.

    `size` is the hidden size for the LSTM and the kernel size for the CNN.

    :return: validation mean error (N)
    """
    update = {"model_kind": kind, "window": window, "rng_seed": seed}
    update["hidden" if kind == "lstm" else "cnn_kernel"] = size
    cell_cfg = train_cfg.model_copy(update=update)
    predictor, _ = train(kind, train_df, val_df, cell_cfg)
    return evaluate(predictor, val_df)


def _compare_job(args):
    kind, size, window, seed, train_df, val_df, train_cfg = args
    try:
        return compare_cell(kind, size, window, seed, train_df, val_df, train_cfg), None
    except (ReceptiveFieldError, TrainingDivergedError) as e:
        return float("nan"), str(e)


def run_compare(cfg, paths):
    """
    Train every (kind, size, window) cell for every seed on one dataset.

    Infeasible or diverged cells are reported in the grid instead of aborting it.

    :return: tuple (grid DataFrame, per-seed DataFrame)
    """
    train_df, val_df = _splits(cfg, paths)
    train_cfg = cfg.train.model_copy(update={"epochs": cfg.compare.epochs})
    cells = [
        (kind, size, window, seed)
        for kind in cfg.compare.kinds
        for size in cfg.compare.sizes
        for window in cfg.compare.windows
        for seed in cfg.compare.seeds
    ]
    jobs = [(*cell, train_df, val_df, train_cfg) for cell in cells]
    if cfg.compare.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.compare.workers) as pool:
            results = list(pool.map(_compare_job, jobs))
    else:
        results = [_compare_job(job) for job in jobs]

    seeds = pd.DataFrame(
        [(*cell, err, msg or "") for cell, (err, msg) in zip(cells, results)],
        columns=["kind", "size", "window", "seed", "val_error", "error"],
    )
    grid = (
        seeds.groupby(["kind", "size", "window"], sort=False)
        .agg(mean_error=("val_error", "mean"), std_error=("val_error", "std"),
             seeds=("val_error", "count"), error=("error", "first"))
        .reset_index()
    )
    for row in grid.itertuples():
        if row.error:
            logging.warning("Cell %s-%d n=%d: %s", row.kind, row.size, row.window, row.error)
    write_csv(seeds, paths.output(COMPARE_SEEDS_FILE), units="# units: val_error=N")
    write_csv(grid, paths.output(COMPARE_GRID_FILE), units="# units: mean_error=N, std_error=N")
    return grid, seeds


def run_rate_statics(cfg, paths):
    """Triangle-wave sweeps at each configured speed, written as one CSV."""
    df = rate_statics(cfg.plant, cfg.rate_statics)
    write_csv(df, paths.output(RATE_STATICS_FILE))
    return df


def trial_telemetry(runs):
    """
    Stack per-trial controller ticks into one telemetry table.

    :param runs: list of `ControlTick` lists, one per trial
    :return: DataFrame with a leading `trial` column followed by `TELEMETRY_COLUMNS`
    """
    frames = []
    for trial, ticks in enumerate(runs):
        df = telemetry_frame(ticks)
        df.insert(0, "trial", trial)
        frames.append(df)
    if not frames:
        return pd.DataFrame(columns=["trial", *TELEMETRY_COLUMNS])
    return pd.concat(frames, ignore_index=True)


def run_impulse(cfg, paths):
    """
    Impulse trials with aligned mean trace and pass/fail audit.

    :return: dict report, also written as JSON
    """
    predictor = load_checkpoint(paths.checkpoint)
    ctrl = controller_config(cfg, predictor)
    runs = []
    traces, trials = impulse(cfg.plant, predictor, ctrl, cfg.impulse, seed=cfg.seed, telemetry=runs)
    dt = 1.0 / cfg.plant.control_rate
    mean = mean_aligned_trace(traces, ctrl.lam, dt=dt)

    write_csv(traces, paths.output(IMPULSE_TRACES_FILE))
    write_csv(trial_telemetry(runs), paths.output(IMPULSE_TELEMETRY_FILE))
    write_csv(trials, paths.output(IMPULSE_SUMMARY_FILE), units="# units: time_to_deadband=s, peak_excess=N")
    write_csv(mean, paths.output(IMPULSE_MEAN_FILE), units="# units: t_aligned=s, mean=N, std=N")

    triggered = trials[trials["trigger_index"].notna()]
    report = {
        "lambda": ctrl.lam,
        "trials": int(len(trials)),
        "triggered": int(len(triggered)),
        "passed": int(triggered["passed"].sum()),
        "all_passed": bool(len(triggered) == len(trials) and triggered["passed"].all()),
        "mean_time_to_deadband": float(triggered["time_to_deadband"].mean()) if len(triggered) else None,
        "mean_excess_removed": float(triggered["excess_removed"].mean()) if len(triggered) else None,
    }
    safe_write_json(paths.output(IMPULSE_REPORT_FILE), report)
    logging.info("Impulse: %d/%d trials passed", report["passed"], report["trials"])
    return report


def run_insert(cfg, paths):
    """
    Insertion cycles with the controller on, plus the controller-off ablation.

    :return: dict report, also written as JSON
    """
    predictor = load_checkpoint(paths.checkpoint)
    ctrl = controller_config(cfg, predictor)
    dt = 1.0 / cfg.plant.control_rate
    thresholds = cfg.insert.thresholds

    runs = []
    traces, summary = insertion(cfg.plant, predictor, ctrl, cfg.insert, enabled=cfg.insert.controller_enabled,
                                telemetry=runs)
    ablation, ablation_summary = insertion(cfg.plant, predictor, ctrl, cfg.insert, enabled=False)
    hist = insertion_histogram(traces, thresholds, dt)

    write_csv(traces, paths.output(INSERT_TRACES_FILE))
    write_csv(telemetry_frame(runs[0]), paths.output(INSERT_TELEMETRY_FILE))
    write_csv(ablation, paths.output(INSERT_ABLATION_FILE))
    write_csv(hist.reset_index(), paths.output(INSERT_HISTOGRAM_FILE), units="# units: thresholds=N, durations=s")

    per_cycle = hist.drop(index="mean")
    report = {
        "lambda": ctrl.lam,
        "thresholds": list(thresholds),
        "mean_durations": [float(v) for v in hist.loc["mean"]],
        "monotone": bool(np.all(np.diff(per_cycle.to_numpy(), axis=1) <= 0)),
        "controller": summary,
        "ablation": ablation_summary,
        "peak_reduced": summary["peak_contact_force"] < ablation_summary["peak_contact_force"],
    }
    safe_write_json(paths.output(INSERT_REPORT_FILE), report)
    logging.info("Insertion peak %.2f N (controller off: %.2f N)",
                 summary["peak_contact_force"], ablation_summary["peak_contact_force"])
    return report


def run_calibrate(cfg, paths):
    """
    Coin-weight calibration and alpha fit against the plant's ground truth.

    :return: dict summary, also written as JSON
    """
    predictor = load_checkpoint(paths.checkpoint)
    plant = SimulatedPlant(cfg.plant)
    trials = run_calibration(plant, predictor, cfg.calibrate)
    if not trials:
        raise LabError("Every calibration trial hit the force cap")
    alpha, residual = fit_alpha(trials)
    table, summary = calibration_report(trials, alpha, residual, cfg.plant.tip_coupling)
    write_csv(table, paths.output(CALIBRATION_FILE), units="# units: weight_g=g, applied_N=N, forces=N")
    safe_write_json(paths.output(CALIBRATION_REPORT_FILE), summary)
    logging.info("Fitted alpha = 1/%.3f (ground truth 1/%.3f), residual %.4f N",
                 1.0 / alpha, 1.0 / cfg.plant.tip_coupling, residual)
    return summary
