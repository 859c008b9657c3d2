"""Tests for app.mdp.finite: MDP invariants, state laws and sampling."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from app.core.errors import DimensionMismatchError, InvalidMdpError
from app.mdp.finite import (
    FiniteMdp,
    StateDistribution,
    propagate,
    sample_batch,
    sample_trajectory,
    state_marginals,
    transition_matrix,
    validate,
)
from app.policies.tables import PolicyTable


def _chain() -> FiniteMdp:
    """0 -a0-> 1 -> 2 (terminal); a1 stays put."""
    p = np.zeros((3, 2, 3))
    p[0, 0, 1] = p[1, 0, 2] = 1.0
    p[0, 1, 0] = p[1, 1, 1] = 1.0
    p[2, :, 2] = 1.0
    r = np.array([[0.0, -0.1], [1.0, -0.1], [0.0, 0.0]])
    return FiniteMdp(p, r, np.array([1.0, 0.0, 0.0]), terminal=frozenset({2}), name="chain")


class TestConstruction:
    def test_shapes(self):
        mdp = _chain()
        assert (mdp.n_states, mdp.n_actions) == (3, 2)
        assert mdp.r_max == 1.0

    def test_arrays_are_read_only(self):
        with pytest.raises(ValueError):
            _chain().reward[0, 0] = 5.0

    def test_reward_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            FiniteMdp(np.full((2, 2, 2), 0.5), np.zeros((2, 3)), np.array([0.5, 0.5]))

    def test_terminal_out_of_range(self):
        with pytest.raises(InvalidMdpError):
            FiniteMdp(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), np.array([0.5, 0.5]), terminal=frozenset({4}))

    def test_json_document(self):
        mdp = _chain()
        back = FiniteMdp.from_json(mdp.to_json())
        assert_allclose(back.transition, mdp.transition)
        assert back.terminal == mdp.terminal

    def test_json_missing_field(self):
        with pytest.raises(InvalidMdpError, match="missing"):
            FiniteMdp.from_json({"transition": [[[1.0]]]})


class TestValidate:
    def test_valid_chain(self):
        report = validate(_chain())
        assert report.valid
        assert not report.irreducible  # the terminal state cannot leave
        assert not report.transient_connected  # 1 never returns to 0

    def test_random_mdp_irreducible(self, make_mdp):
        report = validate(make_mdp(4, 2))
        assert report.valid and report.irreducible

    def test_bad_row_sum_reported(self):
        p = np.full((2, 1, 2), 0.4)
        report = validate(FiniteMdp(p, np.zeros((2, 1)), np.array([1.0, 0.0])))
        assert not report.valid
        assert any("sums to" in issue for issue in report.issues)

    def test_terminal_with_reward_reported(self):
        p = np.zeros((2, 1, 2))
        p[:, 0, 1] = 1.0
        report = validate(FiniteMdp(p, np.array([[0.0], [1.0]]), np.array([1.0, 0.0]), terminal=frozenset({1})))
        assert any("non-zero reward" in issue for issue in report.issues)


class TestStateLaws:
    def test_transition_matrix_rows(self, make_mdp):
        mdp = make_mdp(4, 3)
        m = transition_matrix(mdp, PolicyTable.uniform(4, 3))
        assert_allclose(m.sum(axis=1), 1.0)

    def test_propagate_deterministic(self):
        mdp = _chain()
        go = np.array([[1.0, 0.0]] * 3)
        d = propagate(mdp, StateDistribution(mdp.initial_dist), go)
        assert_allclose(d.probs, [0.0, 1.0, 0.0])

    def test_marginals_order(self):
        mdp = _chain()
        tables = np.stack([np.array([[1.0, 0.0]] * 3)] * 3)
        laws = state_marginals(mdp, tables)
        assert laws.shape == (4, 3)
        assert_allclose(laws[2], [0.0, 0.0, 1.0])
        assert_allclose(laws[3], [0.0, 0.0, 1.0])

    def test_marginals_are_distributions(self, make_mdp, make_policy):
        mdp = make_mdp(5, 2)
        laws = state_marginals(mdp, make_policy(mdp, horizon=4))
        assert_allclose(laws.sum(axis=1), 1.0)

    def test_bad_policy_shape(self, make_mdp):
        with pytest.raises(DimensionMismatchError):
            transition_matrix(make_mdp(3, 2), np.full((3, 3), 1 / 3))


class TestSampling:
    def test_trajectory_length_and_live(self, rng):
        mdp = _chain()
        tables = np.stack([np.array([[1.0, 0.0]] * 3)] * 5)
        traj = sample_trajectory(mdp, tables, rng)
        assert traj.horizon == 5
        assert traj.states[:3] == [0, 1, 2]
        assert traj.live == 2
        assert traj.rewards[2:] == [0.0, 0.0, 0.0]

    def test_reward_noise_bounded(self, rng):
        p = np.full((1, 1, 1), 1.0)
        mdp = FiniteMdp(p, np.array([[1.0]]), np.array([1.0]), reward_noise=0.25)
        traj = sample_trajectory(mdp, np.ones((50, 1, 1)), rng)
        rewards = np.array(traj.rewards)
        assert np.all(np.abs(rewards - 1.0) <= 0.25)
        assert rewards.std() > 0

    def test_batch_matches_marginals(self, make_mdp, make_policy, rng):
        mdp = make_mdp(3, 2)
        policy = make_policy(mdp, horizon=3)
        batch = sample_batch(mdp, policy, rng, 20_000)
        laws = state_marginals(mdp, policy)
        for k in range(4):
            empirical = np.bincount(batch.states[:, k], minlength=3) / len(batch)
            assert_allclose(empirical, laws[k], atol=0.02)

    def test_batch_iterates_trajectories(self, make_mdp, make_policy, rng):
        mdp = make_mdp(3, 2)
        batch = sample_batch(mdp, make_policy(mdp, horizon=2), rng, 5)
        trajectories = list(batch)
        assert len(trajectories) == 5
        assert all(t.horizon == 2 for t in trajectories)


@pytest.mark.slow
class TestTrajectoryLaws:
    def test_sample_trajectory_matches_marginals(self, make_mdp, make_policy, rng):
        mdp = make_mdp(4, 2)
        policy = make_policy(mdp, horizon=3)
        samples = 100_000
        exact = state_marginals(mdp, policy)
        steps = np.arange(policy.horizon + 1)
        counts = np.zeros_like(exact)
        for _ in range(samples):
            counts[steps, sample_trajectory(mdp, policy, rng).states] += 1
        sigma = np.sqrt(exact * (1.0 - exact) / samples)
        bound = stats.norm.isf(2 * stats.norm.sf(3.0) / (2 * exact.size))
        assert np.all(np.abs(counts / samples - exact) <= bound * sigma + 1e-12)
