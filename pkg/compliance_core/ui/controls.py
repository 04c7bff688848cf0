"""
UI controls for the results viewer.

Sidebar selection of the results directory and view, plus the small
per-view widgets (sweep cable and speeds, impulse trial).
"""
import streamlit as st

from constants import RESULT_VIEWS
from compliance_core.ui.ui_utils import get_output_dir_options, available_views, get_trial_options


def render_source_controls():
    """
    Render the results-directory and view selectors in the sidebar.

    :return: tuple (`out_dir` or `None`, `view_type` or `None`)
    """
    with st.sidebar:
        dirs = get_output_dir_options()
        if not dirs:
            st.warning("No results found. Run `python compliance_lab.py --help` to produce some.")
            return None, None
        out_dir = st.selectbox("Results directory", dirs, key="out_dir")
        views = [v for v in RESULT_VIEWS if v in available_views(out_dir)]
        if not views:
            st.info("This directory holds no complete result set.")
            return out_dir, None
        view_type = st.radio("View", views, key="view_type")
    return out_dir, view_type


def render_rate_controls(df):
    """
    Speed selection for the rate-statics view.

    :param df: rate-statics DataFrame
    :return: tuple (swept cable index, list of speeds)
    """
    speeds = sorted(df["speed"].unique().tolist())
    # The swept cable is the one whose position actually moves
    spans = [df[f"q{i + 1}"].max() - df[f"q{i + 1}"].min() for i in range(3)]
    cable = int(max(range(3), key=lambda i: spans[i]))
    with st.container(border=True):
        selected = st.multiselect("Speeds (mm/s)", speeds, default=speeds, key="rate_speeds")
    return cable, selected


def render_trial_controls(trials):
    """
    Impulse trial selector.

    :param trials: per-trial summary DataFrame
    :return: selected trial number or `None`
    """
    options = get_trial_options(trials)
    if not options:
        return None
    return st.selectbox("Trial", options, key="impulse_trial")
