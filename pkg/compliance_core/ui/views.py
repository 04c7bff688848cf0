"""
View components for rendering lab results.

This module provides functions to render:
- Report metrics and tables
- Training curves and the architecture comparison
- Rate-dependent tension loops
- Impulse responses and insertion histograms
- The calibration fit
"""
import numpy as np
import plotly.express as px
import plotly.graph_objects as go
import streamlit as st

from constants import CONFIG, T_COLUMNS
from compliance_core.utils import format_newtons

_LAYOUT = dict(
    dragmode="pan",
    margin=dict(l=0, r=0, t=35, b=0),
    hoverlabel=dict(font_size=16),
    height=550,
)


def render_table(table_df):
    """
    Render a results table; warns when there is nothing to show.

    :param table_df: display-ready DataFrame
    """
    if table_df is None or table_df.empty:
        st.warning("No data available for this selection.")
        return None
    with st.container(border=True):
        st.dataframe(table_df, hide_index=True)
    return None


def render_chart(fig):
    """Render a Plotly figure with the app's standard configuration.
    Does nothing if `fig` is None.
    """
    with st.container(border=True):
        if fig:
            st.plotly_chart(fig, config=CONFIG)


def render_report(report, fields):
    """
    Render selected entries of a JSON report as metrics.

    :param report: dict loaded from a result JSON (or None)
    :param fields: list of (key, label, formatter) tuples
    """
    if not report:
        st.info("No report file for this experiment.")
        return
    present = [f for f in fields if report.get(f[0]) is not None]
    if not present:
        return
    for col, (key, label, fmt) in zip(st.columns(len(present)), present):
        col.metric(label, fmt(report[key]))


def plot_training_history(history_df, lam=None):
    """
    Train and validation mean error per epoch.

    :param history_df: long-form history from `prepare_history_df`
    :param lam: optional deadband (N) drawn as a reference line
    :return: Plotly Figure or `None` when no data
    """
    if history_df is None or history_df.empty:
        st.warning("No training history in this directory.")
        return None
    fig = px.line(history_df, x="epoch", y="error", color="split", markers=True,
                  title="Mean Absolute Tension Error")
    if lam is not None:
        fig.add_hline(y=lam, line_dash="dot", annotation_text=f"lambda {format_newtons(lam)}")
    fig.update_yaxes(title="Error (N)")
    fig.update_xaxes(title="Epoch")
    fig.update_layout(legend_title_text="Split", **_LAYOUT)
    return fig


def plot_compare_grid(seeds_df):
    """
    Validation error per model and window length, one marker per seed.

    :param seeds_df: per-seed comparison DataFrame
    :return: Plotly Figure or `None` when no feasible cell exists
    """
    if seeds_df is None or seeds_df["val_error"].isna().all():
        st.warning("No feasible comparison cells to plot.")
        return None
    df = seeds_df.dropna(subset=["val_error"]).copy()
    df["model"] = df["kind"].str.upper() + "-" + df["size"].astype(int).astype(str)
    df["window"] = "n=" + df["window"].astype(int).astype(str)
    fig = px.box(df, x="model", y="val_error", color="window", points="all",
                 title="Validation Error by Architecture")
    fig.update_yaxes(title="Mean error (N)")
    fig.update_xaxes(title="Model")
    fig.update_layout(legend_title_text="Window", **_LAYOUT)
    return fig


def plot_rate_statics(df, cable, speeds):
    """
    Tension against cable position for each sweep speed.

    :param df: rate-statics DataFrame
    :param cable: 0-based cable index that was swept
    :param speeds: speeds to include
    :return: Plotly Figure or `None` when no data
    """
    if df is None or df.empty:
        st.warning("No rate-statics sweep in this directory.")
        return None
    sub = df[df["speed"].isin(speeds)].copy()
    if sub.empty:
        st.info("Select at least one speed.")
        return None
    q_col, t_col = f"q{cable + 1}", T_COLUMNS[cable]
    sub["speed"] = sub["speed"].map(lambda s: f"{s:g} mm/s")
    fig = px.line(sub, x=q_col, y=t_col, color="speed", title=f"Cable {cable + 1} Tension Loops")
    fig.update_xaxes(title="Cable position (mm)")
    fig.update_yaxes(title="Tension (N)")
    fig.update_layout(legend_title_text="Speed", **_LAYOUT)
    return fig


def plot_impulse_mean(mean_df, lam):
    """
    Mean aligned tip-force estimate with a one-sigma band.

    :param mean_df: DataFrame with t_aligned, mean, std
    :param lam: deadband (N)
    :return: Plotly Figure or `None` when no trial triggered
    """
    if mean_df is None or mean_df.empty:
        st.warning("No triggered impulse trials.")
        return None
    t = mean_df["t_aligned"].to_numpy()
    mean = mean_df["mean"].to_numpy()
    std = mean_df["std"].fillna(0.0).to_numpy()

    fig = go.Figure()
    fig.add_trace(go.Scatter(
        x=np.concatenate([t, t[::-1]]),
        y=np.concatenate([mean + std, (mean - std)[::-1]]),
        fill="toself",
        line=dict(width=0),
        opacity=0.25,
        name="+/- 1 std",
        hoverinfo="skip",
    ))
    fig.add_trace(go.Scatter(
        x=t, y=mean, mode="lines", name="Mean",
        hovertemplate="t: %{x:.2f} s<br>Force: %{y:.3f} N<extra></extra>",
    ))
    if lam is not None:
        fig.add_hline(y=lam, line_dash="dot", annotation_text="lambda")
    fig.update_xaxes(title="Time since trigger (s)")
    fig.update_yaxes(title="Estimated tip force (N)")
    fig.update_layout(title="Aligned Impulse Response", **_LAYOUT)
    return fig


def plot_impulse_trial(traces_df, trial, lam):
    """
    External tensions of one impulse trial.

    :param traces_df: per-tick impulse traces
    :param trial: trial number
    :param lam: deadband (N)
    :return: Plotly Figure or `None`
    """
    if traces_df is None or traces_df.empty:
        return None
    sub = traces_df[traces_df["trial"] == trial]
    long = sub.melt(id_vars="t", value_vars=["Fext1", "Fext2", "Fext3"], var_name="cable", value_name="force")
    fig = px.line(long, x="t", y="force", color="cable", title=f"Trial {trial} External Tensions")
    if lam is not None:
        fig.add_hrect(y0=-lam, y1=lam, opacity=0.1, line_width=0)
    fig.update_xaxes(title="Time (s)")
    fig.update_yaxes(title="External tension (N)")
    fig.update_layout(legend_title_text="Cable", **_LAYOUT)
    return fig


def plot_insertion_force(traces_df, ablation_df):
    """
    Contact-force magnitude with the controller on and off.

    :return: Plotly Figure or `None` when no data
    """
    if traces_df is None or traces_df.empty:
        st.warning("No insertion traces in this directory.")
        return None
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=traces_df["t"], y=traces_df["contact_force"], mode="lines", name="Controller on"))
    if ablation_df is not None and not ablation_df.empty:
        fig.add_trace(go.Scatter(x=ablation_df["t"], y=ablation_df["contact_force"], mode="lines",
                                 name="Controller off", line=dict(dash="dash")))
    fig.update_xaxes(title="Time (s)")
    fig.update_yaxes(title="Contact force (N)")
    fig.update_layout(title="Tube Contact Force", **_LAYOUT)
    return fig


def plot_insertion_histogram(hist_df):
    """
    Time spent above each force threshold, per cycle and on average.

    :param hist_df: histogram DataFrame with a `cycle` column and one column per threshold
    :return: Plotly Figure or `None` when no data
    """
    if hist_df is None or hist_df.empty:
        return None
    long = hist_df.melt(id_vars="cycle", var_name="threshold", value_name="duration")
    long["cycle"] = long["cycle"].astype(str)
    long["threshold"] = long["threshold"].astype(str) + " N"
    fig = px.bar(long, x="threshold", y="duration", color="cycle", barmode="group",
                 title="Time Above Threshold")
    fig.update_xaxes(title="Threshold")
    fig.update_yaxes(title="Duration (s)")
    fig.update_layout(legend_title_text="Cycle", **_LAYOUT)
    return fig


def plot_calibration(calib_df):
    """
    Fitted tip-plane force components against the applied ones.

    :param calib_df: DataFrame from `prepare_calibration_df`
    :return: Plotly Figure or `None` when no data
    """
    if calib_df is None or calib_df.empty:
        st.warning("No calibration trials in this directory.")
        return None
    fig = go.Figure()
    for comp in ("x", "y"):
        fig.add_trace(go.Scatter(
            x=calib_df[f"F{comp}_applied"],
            y=calib_df[f"F{comp}_fit"],
            mode="markers",
            name=f"F{comp}",
            customdata=np.stack([calib_df["pose"], calib_df["weight_g"]], axis=1),
            hovertemplate="Pose %{customdata[0]}, %{customdata[1]} g<br>"
                          "Applied: %{x:.3f} N<br>Fitted: %{y:.3f} N<extra></extra>",
        ))
    lim = float(np.nanmax(np.abs(calib_df[["Fx_applied", "Fy_applied", "Fx_fit", "Fy_fit"]].to_numpy()))) or 1.0
    fig.add_trace(go.Scatter(x=[-lim, lim], y=[-lim, lim], mode="lines", name="Ideal",
                             line=dict(dash="dot", color="gray")))
    fig.update_xaxes(title="Applied (N)")
    fig.update_yaxes(title="Fitted (N)", scaleanchor="x")
    fig.update_layout(title="Tip Force Calibration", **_LAYOUT)
    return fig
