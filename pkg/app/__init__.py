"""Matryoshka policy gradient: extended softmax policies, soft-DP oracle and certificates."""

__version__ = "1.0.0"
