"""
UI package for the compliance lab results viewer.

Contains Streamlit view, control and data-shaping logic for browsing the
CSV and JSON files the command-line pipeline writes.
"""
