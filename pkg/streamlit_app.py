"""
Streamlit results viewer entry point.

Wires result loading, sidebar controls and view rendering for the files the
command-line pipeline writes under `output/`.
"""
import logging

import streamlit as st

from constants import APP_TITLE
from compliance_core import pipeline
from compliance_core.io_utils import ensure_project_dirs
from compliance_core.utils import format_newtons
from compliance_core.ui.controls import render_source_controls, render_rate_controls, render_trial_controls
from compliance_core.ui.views import (
    render_table, render_chart, render_report,
    plot_training_history, plot_compare_grid, plot_rate_statics,
    plot_impulse_mean, plot_impulse_trial,
    plot_insertion_force, plot_insertion_histogram, plot_calibration,
)
from compliance_core.ui.ui_utils import (
    load_result_csv, load_result_json,
    prepare_history_df, prepare_compare_table, prepare_calibration_df,
)


def _fmt_seconds(v):
    return f"{v:.2f} s"


def _fmt_ratio(v):
    return f"{100 * v:.0f} %"


def render_training(out_dir):
    history = load_result_csv(out_dir, pipeline.HISTORY_FILE)
    report = load_result_json(out_dir, pipeline.EVAL_FILE)
    render_report(report, [
        ("train_error", "Train error", format_newtons),
        ("val_error", "Validation error", format_newtons),
        ("lambda", "Deadband", format_newtons),
    ])
    lam = report.get("lambda") if report else None
    render_chart(plot_training_history(prepare_history_df(history) if history is not None else None, lam))


def render_compare(out_dir):
    grid = load_result_csv(out_dir, pipeline.COMPARE_GRID_FILE)
    seeds = load_result_csv(out_dir, pipeline.COMPARE_SEEDS_FILE)
    render_table(prepare_compare_table(grid) if grid is not None else None)
    render_chart(plot_compare_grid(seeds))


def render_rate_statics(out_dir):
    df = load_result_csv(out_dir, pipeline.RATE_STATICS_FILE)
    if df is None:
        st.warning("Could not read the rate-statics sweep.")
        return
    cable, speeds = render_rate_controls(df)
    render_chart(plot_rate_statics(df, cable, speeds))


def render_impulse(out_dir):
    report = load_result_json(out_dir, pipeline.IMPULSE_REPORT_FILE)
    render_report(report, [
        ("passed", "Passed", str),
        ("trials", "Trials", str),
        ("mean_time_to_deadband", "Time to deadband", _fmt_seconds),
        ("mean_excess_removed", "Excess removed", _fmt_ratio),
    ])
    lam = report.get("lambda") if report else None
    render_chart(plot_impulse_mean(load_result_csv(out_dir, pipeline.IMPULSE_MEAN_FILE), lam))

    trials = load_result_csv(out_dir, pipeline.IMPULSE_SUMMARY_FILE)
    with st.expander("Individual trials"):
        render_table(trials)
        trial = render_trial_controls(trials)
        if trial is not None:
            render_chart(plot_impulse_trial(load_result_csv(out_dir, pipeline.IMPULSE_TRACES_FILE), trial, lam))


def render_insertion(out_dir):
    report = load_result_json(out_dir, pipeline.INSERT_REPORT_FILE)
    if report:
        render_report({
            "on": report["controller"]["peak_contact_force"],
            "off": report["ablation"]["peak_contact_force"],
            "monotone": "yes" if report.get("monotone") else "no",
        }, [
            ("on", "Peak force (controller on)", format_newtons),
            ("off", "Peak force (controller off)", format_newtons),
            ("monotone", "Histogram monotone", str),
        ])
    render_chart(plot_insertion_force(
        load_result_csv(out_dir, pipeline.INSERT_TRACES_FILE),
        load_result_csv(out_dir, pipeline.INSERT_ABLATION_FILE),
    ))
    render_chart(plot_insertion_histogram(load_result_csv(out_dir, pipeline.INSERT_HISTOGRAM_FILE)))


def render_calibration(out_dir):
    report = load_result_json(out_dir, pipeline.CALIBRATION_REPORT_FILE)
    render_report(report, [
        ("inverse_alpha", "1 / alpha", lambda v: f"{v:.3f}"),
        ("residual_N", "RMS residual", format_newtons),
        ("relative_error", "Error vs. ground truth", _fmt_ratio),
    ])
    table = load_result_csv(out_dir, pipeline.CALIBRATION_FILE)
    calib = prepare_calibration_df(table) if table is not None else None
    render_chart(plot_calibration(calib))
    render_table(calib)


def main():
    """
    Run the Streamlit app.

    The function configures the page, lets the user pick a results directory
    and a view, and renders that view from the files on disk.
    """
    ensure_project_dirs()

    st.set_page_config(page_title=APP_TITLE, layout="wide")
    st.title(APP_TITLE)

    out_dir, view_type = render_source_controls()
    if out_dir is None or view_type is None:
        st.stop()

    # Dispatch view
    try:
        match view_type:
            case "Training":
                render_training(out_dir)
            case "Architecture Comparison":
                render_compare(out_dir)
            case "Rate Statics":
                render_rate_statics(out_dir)
            case "Impulse Response":
                render_impulse(out_dir)
            case "Insertion":
                render_insertion(out_dir)
            case "Calibration":
                render_calibration(out_dir)
    except (KeyError, ValueError):
        logging.exception("Failed to render %s from %s", view_type, out_dir)
        st.error("These result files look incomplete or out of date. Re-run the matching command.")


if __name__ == "__main__":
    main()
