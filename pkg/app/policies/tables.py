"""Dense policy tables π(a|s) for finite state spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.core.errors import DimensionMismatchError


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Row-stochastic matrix ``probs[s, a] = π(a|s)``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise DimensionMismatchError(f"policy table must be 2-D (states, actions), got shape {probs.shape}")
        if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-10, rtol=0):
            raise DimensionMismatchError("policy table rows must be probability vectors")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def row(self, s: int) -> np.ndarray:
        return self.probs[s]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> PolicyTable:
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))


def as_probs(policy: PolicyTable | np.ndarray) -> np.ndarray:
    """Return the raw ``(S, A)`` array of a table-like policy."""
    if isinstance(policy, PolicyTable):
        return policy.probs
    return np.asarray(policy, dtype=float)


def baseline_array(baseline: PolicyTable | np.ndarray | None, n_states: int, n_actions: int) -> np.ndarray:
    """Broadcast a baseline policy π̄ to an ``(S, A)`` array (uniform when ``None``)."""
    if baseline is None:
        return np.full((n_states, n_actions), 1.0 / n_actions)
    arr = as_probs(baseline)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (n_states, n_actions))
    if arr.shape != (n_states, n_actions):
        raise DimensionMismatchError(f"baseline shape {arr.shape} != ({n_states}, {n_actions})")
    if np.any(arr <= 0):
        raise DimensionMismatchError("baseline policy must have full support")
    return np.asarray(arr, dtype=float)
