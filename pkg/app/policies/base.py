"""Abstract base class for preference models h_θ(a, s, i).

Every model maps a flat parameter vector, a state and a step index ``i`` to
one preference per action, and exposes the Jacobian of those preferences
with respect to the parameters.  Softmax policies, MPG updates and the
kernel certificates only ever talk to this interface, so linear feature
maps and neural networks are interchangeable.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, ClassVar

import numpy as np


class PreferenceModel(ABC):
    """Strategy interface for the preferences of one step policy."""

    kind: ClassVar[str] = "base"

    #: Whether one parameter block may serve every step (horizon fed as input).
    supports_shared: ClassVar[bool] = False

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError(f"n_actions must be positive, got {n_actions}")
        self.n_actions = n_actions

    # ── Subclass contract ───────────────────────────────────────────────

    @property
    @abstractmethod
    def n_params(self) -> int:
        """Length P of a parameter block."""

    @abstractmethod
    def preferences(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        """Return ``h(·, state)`` as a vector of length ``n_actions``."""

    @abstractmethod
    def jacobian(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        """Return ``∂h(a, state)/∂θ`` stacked as an ``(n_actions, P)`` matrix."""

    @abstractmethod
    def to_json(self) -> dict[str, Any]:
        """Describe the model (not its parameters) for checkpoints."""

    # ── Defaults ────────────────────────────────────────────────────────

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        """Initial parameter block.  Linear models start at θ = 0 (π = π̄)."""
        return np.zeros(self.n_params)

    def evaluate(self, theta: np.ndarray, state: Any, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Preferences and Jacobian in one pass.  Override when both share work."""
        return self.preferences(theta, state, step), self.jacobian(theta, state, step)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.kind!r}, n_actions={self.n_actions}, n_params={self.n_params})"
