"""Tests for app.policies.softmax: step policies and extended policies."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.core import diagnostics
from app.core.errors import DimensionMismatchError, HorizonMismatchError, NonFinitePreferenceError
from app.policies.base import PreferenceModel
from app.policies.features import FeatureMap, TabularFeatures
from app.policies.softmax import (
    ExtendedPolicy,
    SoftmaxPolicy,
    action_distribution,
    as_table,
    grad_log_policy,
    kl_divergence,
)


class _Constant(PreferenceModel):
    """Preferences fixed by the parameter vector itself (one per action)."""

    kind = "constant"

    @property
    def n_params(self) -> int:
        return self.n_actions

    def preferences(self, theta, state, step):
        return np.asarray(theta, dtype=float)

    def jacobian(self, theta, state, step):
        return np.eye(self.n_actions)

    def to_json(self):
        return {"kind": self.kind, "n_actions": self.n_actions}


class TestSoftmaxPolicy:
    def test_zero_preferences_give_baseline(self):
        policy = SoftmaxPolicy(_Constant(3), np.zeros(3), tau=0.7, baseline=np.array([0.2, 0.3, 0.5]))
        assert_allclose(action_distribution(policy, 0), [0.2, 0.3, 0.5])

    def test_boltzmann_form(self):
        h = np.array([1.0, -0.5, 0.25])
        policy = SoftmaxPolicy(_Constant(3), h, tau=0.5)
        expected = np.exp(h / 0.5) / np.exp(h / 0.5).sum()
        assert_allclose(action_distribution(policy, 0), expected, rtol=1e-12)

    def test_huge_preferences_stay_positive_and_count(self):
        policy = SoftmaxPolicy(_Constant(2), np.array([1e6, 0.0]), tau=0.01)
        probs = action_distribution(policy, 0)
        assert np.all(probs > 0)
        assert_allclose(probs.sum(), 1.0)
        assert diagnostics.get_count(diagnostics.LOGIT_CLAMP) == 1

    def test_non_finite_preference_raises(self):
        policy = SoftmaxPolicy(_Constant(2), np.array([np.nan, 0.0]), tau=1.0)
        with pytest.raises(NonFinitePreferenceError):
            action_distribution(policy, 7)

    def test_non_positive_tau(self):
        with pytest.raises(ValueError):
            SoftmaxPolicy(_Constant(2), np.zeros(2), tau=0.0)

    def test_theta_shape_checked(self):
        with pytest.raises(DimensionMismatchError):
            SoftmaxPolicy(_Constant(2), np.zeros(3), tau=1.0)

    def test_grad_log_policy_matches_finite_differences(self, rng):
        table = rng.standard_normal((2, 3, 4))
        model = FeatureMap(3, 4, table=table)
        theta = rng.standard_normal(4)
        policy = SoftmaxPolicy(model, theta, tau=0.8)
        grad = grad_log_policy(policy, 2, 1)
        numeric = np.zeros(4)
        h = 1e-6
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            plus = np.log(action_distribution(SoftmaxPolicy(model, theta + e, 0.8), 1)[2])
            minus = np.log(action_distribution(SoftmaxPolicy(model, theta - e, 0.8), 1)[2])
            numeric[j] = (plus - minus) / (2 * h)
        assert_allclose(grad, numeric, rtol=1e-6, atol=1e-9)

    def test_score_has_zero_mean(self, rng):
        model = TabularFeatures(2, 3)
        policy = SoftmaxPolicy(model, rng.standard_normal(6), tau=0.3)
        probs = action_distribution(policy, 1)
        mean = sum(probs[a] * grad_log_policy(policy, a, 1) for a in range(3))
        assert_allclose(mean, 0.0, atol=1e-12)

    def test_as_table(self, make_mdp, rng):
        mdp = make_mdp(3, 2)
        policy = SoftmaxPolicy(TabularFeatures(3, 2), rng.standard_normal(6), tau=1.0)
        assert_allclose(as_table(policy, mdp).probs.sum(axis=1), 1.0)


class TestKlDivergence:
    def test_zero_for_equal(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0)

    def test_zero_probability_terms(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2))

    def test_rows(self):
        p = np.array([[0.5, 0.5], [0.9, 0.1]])
        q = np.array([[0.5, 0.5], [0.5, 0.5]])
        out = kl_divergence(p, q)
        assert out.shape == (2,)
        assert out[0] == pytest.approx(0.0)
        assert out[1] > 0


class TestExtendedPolicy:
    def test_create_has_one_block_per_step(self):
        policy = ExtendedPolicy.create(TabularFeatures(4, 2), horizon=3, tau=0.5)
        assert len(policy.thetas) == 3
        assert policy.step(2).step == 2

    def test_steps_are_independent(self, make_mdp):
        mdp = make_mdp(3, 2)
        policy = ExtendedPolicy.create(TabularFeatures(3, 2), horizon=3, tau=0.5)
        before = policy.as_tables(mdp)
        policy.apply([np.zeros(6), np.ones(6) * np.array([1, -1] * 3), np.zeros(6)])
        after = policy.as_tables(mdp)
        assert_allclose(after[0], before[0])
        assert_allclose(after[2], before[2])
        assert not np.allclose(after[1], before[1])

    def test_step_view_tracks_tau(self):
        policy = ExtendedPolicy.create(TabularFeatures(2, 2), horizon=2, tau=0.5)
        policy.set_tau(0.25)
        assert policy.step(1).tau == 0.25

    def test_step_out_of_range(self):
        policy = ExtendedPolicy.create(TabularFeatures(2, 2), horizon=2, tau=0.5)
        with pytest.raises(HorizonMismatchError):
            policy.step(3)

    def test_tabular_cannot_share(self):
        with pytest.raises(ValueError, match="share"):
            ExtendedPolicy(TabularFeatures(2, 2), [np.zeros(4)], 0.5, 3, shared=True)

    def test_wrong_block_count(self):
        with pytest.raises(HorizonMismatchError):
            ExtendedPolicy(TabularFeatures(2, 2), [np.zeros(4)], 0.5, 3)

    def test_truncated_copies_prefix(self, make_mdp, make_policy):
        mdp = make_mdp(3, 2)
        policy = make_policy(mdp, horizon=4)
        short = policy.truncated(2)
        assert short.horizon == 2
        assert_allclose(short.as_tables(mdp), policy.as_tables(mdp)[:2])
        short.thetas[0] += 1.0
        assert not np.allclose(short.thetas[0], policy.thetas[0])

    def test_json_rebuilds_same_tables(self, make_mdp, make_policy):
        mdp = make_mdp(3, 2)
        policy = make_policy(mdp, horizon=3, baseline=np.array([0.25, 0.75]))
        back = ExtendedPolicy.from_json(policy.to_json())
        assert_allclose(back.as_tables(mdp), policy.as_tables(mdp))
        assert back.tau == policy.tau

    def test_action_count_mismatch(self, make_mdp):
        policy = ExtendedPolicy.create(TabularFeatures(3, 3), horizon=1, tau=1.0)
        with pytest.raises(DimensionMismatchError):
            policy.as_tables(make_mdp(3, 2))
