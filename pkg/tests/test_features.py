"""Tests for linear preference models and the model registry."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.core.errors import ConfigError, DimensionMismatchError
from app.policies import registry
from app.policies.features import FeatureMap, RandomFeatures, TabularFeatures
from app.policies.registry import get_feature_map, list_feature_kinds, model_from_json, register_feature_kind


class TestTabularFeatures:
    def test_one_hot_index(self):
        model = TabularFeatures(n_states=3, n_actions=2)
        psi = model.eval(1, 2)
        assert psi.shape == (6,)
        assert np.flatnonzero(psi).tolist() == [2 * 2 + 1]

    def test_preferences_slice_theta(self):
        model = TabularFeatures(3, 2)
        theta = np.arange(6.0)
        assert_allclose(model.preferences(theta, 1, step=1), [2.0, 3.0])
        assert_allclose(model.matrix(1) @ theta, [2.0, 3.0])

    def test_preferences_are_copies(self):
        model = TabularFeatures(2, 2)
        theta = np.zeros(4)
        model.preferences(theta, 0, step=1)[0] = 5.0
        assert theta[0] == 0.0

    def test_starts_at_zero(self):
        assert_allclose(TabularFeatures(4, 3).init_params(), np.zeros(12))


class TestFeatureMap:
    def test_table_and_callable_are_exclusive(self):
        with pytest.raises(ValueError):
            FeatureMap(2, 3)
        with pytest.raises(ValueError):
            FeatureMap(2, 3, lambda s: np.zeros((2, 3)), table=np.zeros((1, 2, 3)))

    def test_table_shape_checked(self):
        with pytest.raises(DimensionMismatchError):
            FeatureMap(2, 3, table=np.zeros((4, 3, 2)))

    def test_table_is_read_only(self):
        model = FeatureMap(2, 3, table=np.ones((4, 2, 3)))
        with pytest.raises(ValueError):
            model.table[0, 0, 0] = 2.0

    def test_callable_shape_checked(self):
        model = FeatureMap(2, 3, lambda s: np.zeros((3, 2)))
        with pytest.raises(DimensionMismatchError):
            model.matrix(0)

    def test_callable_cannot_serialise(self):
        with pytest.raises(ValueError):
            FeatureMap(2, 1, lambda s: np.ones((2, 1))).to_json()

    def test_linear_in_theta(self, rng):
        table = rng.standard_normal((5, 3, 4))
        model = FeatureMap(3, 4, table=table)
        theta = rng.standard_normal(4)
        assert_allclose(model.preferences(theta, 3, step=2), table[3] @ theta)
        assert_allclose(model.jacobian(theta, 3, step=2), table[3])


class TestRegistry:
    def test_known_kinds(self):
        assert {"tabular", "custom", "random", "neural"} <= set(list_feature_kinds())

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="Unknown feature kind"):
            get_feature_map("fourier", n_actions=2)

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            get_feature_map("tabular", n_actions=2)

    def test_case_insensitive(self):
        assert isinstance(get_feature_map(" Tabular ", n_states=2, n_actions=2), TabularFeatures)

    def test_custom_needs_features(self):
        with pytest.raises(ConfigError):
            get_feature_map("custom", n_actions=2)

    def test_register(self, monkeypatch):
        monkeypatch.setattr(registry, "_KINDS", dict(registry._KINDS))
        register_feature_kind("twice_tabular", lambda *, n_states, n_actions, **_: TabularFeatures(n_states, 2 * n_actions))
        model = get_feature_map("twice_tabular", n_states=2, n_actions=2)
        assert model.n_actions == 4

    def test_model_from_json_tabular(self):
        model = model_from_json(TabularFeatures(5, 3).to_json())
        assert isinstance(model, TabularFeatures)
        assert (model.n_states, model.n_actions) == (5, 3)

    def test_model_from_json_table(self, rng):
        table = rng.standard_normal((2, 2, 3))
        model = model_from_json({"kind": "custom", "n_actions": 2, "dimension": 3, "table": table.tolist()})
        assert_allclose(model.table, table)

    def test_model_from_json_random_keeps_seed(self, rng):
        original = RandomFeatures(2, rng.standard_normal((3, 2, 4)), seed=17)
        doc = original.to_json()
        doc["table"] = doc["table"].tolist()
        back = model_from_json(doc)
        assert isinstance(back, RandomFeatures)
        assert back.seed == 17
        assert_allclose(back.table, original.table)

    def test_model_from_json_without_kind(self):
        with pytest.raises(ConfigError):
            model_from_json({"n_actions": 2})
