"""Experiment grids, runners, reports and the verification suite."""
