"""Exact soft dynamic programming for the finite-horizon max-entropy objective."""
