"""Preference-model registry: factory + discovery.

Usage:
    from app.policies.registry import get_feature_map, list_feature_kinds

    model = get_feature_map("tabular", n_states=16, n_actions=4)
    same = model_from_json(model.to_json())
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

import numpy as np

from app.core.errors import ConfigError
from app.neural.mlp import NeuralPreference
from app.policies.base import PreferenceModel
from app.policies.features import FeatureMap, RandomFeatures, TabularFeatures

Factory = Callable[..., PreferenceModel]


def _tabular(*, n_states: int, n_actions: int, **_: Any) -> PreferenceModel:
    return TabularFeatures(n_states, n_actions)


def _custom(*, n_actions: int, table: Any = None, features: Any = None, dimension: int | None = None, **_: Any):
    if table is not None:
        table = np.asarray(table, dtype=float)
        return FeatureMap(n_actions, table.shape[2], table=table)
    if features is None or dimension is None:
        raise ConfigError("custom features need either `table` or `features` + `dimension`")
    return FeatureMap(n_actions, dimension, features)


def _random(*, n_actions: int, table: Any, seed: int, **_: Any) -> PreferenceModel:
    return RandomFeatures(n_actions, np.asarray(table, dtype=float), int(seed))


def _neural(**kwargs: Any) -> PreferenceModel:
    return NeuralPreference.from_json(kwargs, state_features=kwargs.get("state_features"))


# ── Static registry ─────────────────────────────────────────────────────

_KINDS: dict[str, Factory] = {
    "tabular": _tabular,
    "custom": _custom,
    "random": _random,
    "neural": _neural,
}


def register_feature_kind(kind: str, factory: Factory) -> None:
    """Register a custom preference-model kind at runtime."""
    _KINDS[kind.lower()] = factory


def get_feature_map(kind: str, **kwargs: Any) -> PreferenceModel:
    """Instantiate a preference model by kind.

    Args:
        kind: ``"tabular"``, ``"custom"``, ``"random"``, ``"neural"`` (or any registered kind).
        **kwargs: Constructor arguments of that kind (``n_states``, ``n_actions``, ``table``…).
    """
    key = kind.lower().strip()
    factory = _KINDS.get(key)
    if factory is None:
        available = ", ".join(sorted(_KINDS))
        raise ConfigError(f"Unknown feature kind '{kind}'. Available: {available}")
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for feature kind '{kind}': {exc}") from exc


def model_from_json(doc: dict[str, Any], **context: Any) -> PreferenceModel:
    """Rebuild a model from its ``to_json()`` description.

    ``context`` supplies what a document cannot hold, e.g. ``state_features``
    for neural models.
    """
    if "kind" not in doc:
        raise ConfigError("model document has no 'kind'")
    fields = {k: v for k, v in doc.items() if k != "kind"}
    return get_feature_map(doc["kind"], **fields, **context)


def list_feature_kinds() -> list[str]:
    """Return sorted list of registered kinds."""
    return sorted(_KINDS)
