"""Empirical neural tangent kernel and its positive-definiteness test."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg

from app.certificates.spectrum import preference_gram
from app.config import get_settings
from app.policies.base import PreferenceModel


@dataclass(frozen=True, eq=False)
class NtkGram:
    """NTK on an evaluation set of states (all actions), with its extreme eigenvalues.

    ``passed`` means ``λ_min > tol · λ_max``.  A failure is *inconclusive*:
    it never shows the trained policy is suboptimal.
    """

    matrix: np.ndarray
    min_eigenvalue: float
    max_eigenvalue: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_eigenvalue > 0 and self.min_eigenvalue > self.tol * self.max_eigenvalue

    @property
    def verdict(self) -> str:
        return "positive-definite" if self.passed else "inconclusive"

    @property
    def condition(self) -> float:
        return self.max_eigenvalue / self.min_eigenvalue if self.min_eigenvalue > 0 else float("inf")


def ntk_gram(
    model: PreferenceModel, theta: np.ndarray, states: Sequence[Any], step: int = 1, tol: float | None = None
) -> NtkGram:
    """Gram of per-``(a, s)`` parameter gradients of ``h_θ`` at step ``step``."""
    tol = get_settings().ntk_tol if tol is None else tol
    gram = preference_gram(model, theta, states, step)
    values = linalg.eigvalsh(0.5 * (gram + gram.T))
    return NtkGram(gram, float(values[0]), float(values[-1]), tol)
