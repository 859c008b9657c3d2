"""Linear preference models h_θ(a, s) = θ · ψ(a, s).

Index convention for finite spaces: the pair ``(a, s)`` has flat index
``s * n_actions + a`` so that an ``(S, A)`` table flattens onto it.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any, ClassVar

import numpy as np

from app.core.errors import DimensionMismatchError
from app.policies.base import PreferenceModel


class FeatureMap(PreferenceModel):
    """Linear model over an explicit feature map ψ: A×S → R^P."""

    kind: ClassVar[str] = "custom"

    def __init__(
        self,
        n_actions: int,
        dimension: int,
        features: Callable[[Any], np.ndarray] | None = None,
        *,
        table: np.ndarray | None = None,
    ):
        """Build from either a callable ``state -> (A, P)`` or a finite ``(S, A, P)`` table."""
        super().__init__(n_actions)
        if (features is None) == (table is None):
            raise ValueError("pass exactly one of `features` or `table`")
        if table is not None:
            table = np.array(table, dtype=float)
            if table.ndim != 3 or table.shape[1:] != (n_actions, dimension):
                raise DimensionMismatchError(f"feature table must be (S, {n_actions}, {dimension}), got {table.shape}")
            table.setflags(write=False)
        self._dimension = dimension
        self._features = features
        self.table = table

    @property
    def n_params(self) -> int:
        return self._dimension

    @property
    def n_states(self) -> int | None:
        return None if self.table is None else self.table.shape[0]

    def matrix(self, state: Any) -> np.ndarray:
        """``Ψ(s)`` with rows ``ψ(a, s)``, shape ``(A, P)``."""
        if self.table is not None:
            return self.table[int(state)]
        psi = np.asarray(self._features(state), dtype=float)  # type: ignore[misc]
        if psi.shape != (self.n_actions, self._dimension):
            raise DimensionMismatchError(f"feature map returned {psi.shape}, expected {(self.n_actions, self._dimension)}")
        return psi

    def eval(self, action: int, state: Any) -> np.ndarray:
        """``ψ(a, s)``."""
        return self.matrix(state)[action]

    def preferences(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        return self.matrix(state) @ theta

    def jacobian(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        return self.matrix(state)

    def to_json(self) -> dict[str, Any]:
        if self.table is None:
            raise ValueError("callable feature maps cannot be serialised")
        return {"kind": self.kind, "n_actions": self.n_actions, "dimension": self._dimension, "table": self.table}


class TabularFeatures(FeatureMap):
    """Kronecker-delta features: one parameter per ``(a, s)`` pair."""

    kind: ClassVar[str] = "tabular"

    def __init__(self, n_states: int, n_actions: int):
        PreferenceModel.__init__(self, n_actions)
        self._n_states = n_states
        self._dimension = n_states * n_actions
        self._features = None
        self.table = None

    @property
    def n_states(self) -> int:
        return self._n_states

    def matrix(self, state: Any) -> np.ndarray:
        s = int(state)
        psi = np.zeros((self.n_actions, self._dimension))
        psi[np.arange(self.n_actions), s * self.n_actions + np.arange(self.n_actions)] = 1.0
        return psi

    def preferences(self, theta: np.ndarray, state: Any, step: int) -> np.ndarray:
        s = int(state)
        return theta[s * self.n_actions : (s + 1) * self.n_actions].copy()

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "n_actions": self.n_actions, "n_states": self._n_states}


class RandomFeatures(FeatureMap):
    """Finite random-feature approximation of a kernel on a finite A×S grid.

    Built by :func:`app.certificates.spectrum.random_feature_kernel`; the seed
    is kept so a checkpoint can be regenerated exactly.
    """

    kind: ClassVar[str] = "random"

    def __init__(self, n_actions: int, table: np.ndarray, seed: int):
        table = np.asarray(table, dtype=float)
        super().__init__(n_actions, table.shape[2], table=table)
        self.seed = seed

    def to_json(self) -> dict[str, Any]:
        doc = super().to_json()
        doc["seed"] = self.seed
        return doc
