"""Tests for app.dp.soft_dp: exact soft dynamic programming."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import logsumexp

from app.core.errors import ConvergenceError, HorizonMismatchError, IdentityViolationError
from app.dp.soft_dp import (
    SoftDpSolution,
    evaluate_policy,
    objective,
    solve_infinite_discounted,
    solve_optimal,
    truncate,
    value_gap,
)
from app.mdp.finite import FiniteMdp


def _bandit(rewards) -> FiniteMdp:
    rewards = np.asarray(rewards, dtype=float)
    return FiniteMdp(np.ones((1, rewards.size, 1)), rewards[None, :], np.ones(1), name="bandit")


class TestSolveOptimal:
    def test_bandit_closed_form(self):
        mdp = _bandit([1.0, 0.0])
        tau = 0.5
        solution = solve_optimal(mdp, 1, tau)
        weights = np.exp(np.array([1.0, 0.0]) / tau)
        assert_allclose(solution.pi_star[0, 0], weights / weights.sum(), rtol=1e-12)
        assert solution.v_star[1, 0] == pytest.approx(tau * np.log(0.5 * weights.sum()))

    def test_baseline_tilts_policy(self):
        mdp = _bandit([0.0, 0.0])
        solution = solve_optimal(mdp, 1, 1.0, baseline=np.array([0.2, 0.8]))
        assert_allclose(solution.pi_star[0, 0], [0.2, 0.8])
        assert solution.v_star[1, 0] == pytest.approx(0.0, abs=1e-15)

    def test_log_sum_exp_identity(self, make_mdp):
        mdp = make_mdp(4, 3)
        tau = 0.3
        solution = solve_optimal(mdp, 5, tau)
        for i in range(1, 6):
            expected = tau * logsumexp(solution.q_star[i - 1] / tau, axis=1, b=1 / 3)
            assert_allclose(solution.v_star[i], expected, rtol=1e-12)
            assert_allclose(solution.pi_star[i - 1].sum(axis=1), 1.0)

    def test_value_of_optimal_policy(self, make_mdp):
        mdp = make_mdp(4, 2)
        solution = solve_optimal(mdp, 4, 0.7)
        evaluation = evaluate_policy(mdp, solution.pi_star, 0.7)
        assert_allclose(evaluation.v, solution.v_star, atol=1e-10)

    def test_optimal_dominates_random_policies(self, make_mdp, make_policy):
        mdp = make_mdp(3, 2)
        solution = solve_optimal(mdp, 3, 0.5)
        best = float(mdp.initial_dist @ solution.v_star[3])
        for _ in range(10):
            assert objective(mdp, make_policy(mdp, horizon=3, tau=0.5)) <= best + 1e-12

    def test_rejects_bad_arguments(self, make_mdp):
        mdp = make_mdp()
        with pytest.raises(HorizonMismatchError):
            solve_optimal(mdp, 0, 1.0)
        with pytest.raises(ValueError):
            solve_optimal(mdp, 2, 0.0)
        with pytest.raises(ValueError):
            solve_optimal(mdp, 2, 1.0, gamma=1.5)

    def test_policy_accessor(self, make_mdp):
        solution = solve_optimal(make_mdp(), 2, 1.0)
        assert_allclose(solution.policy(2).probs, solution.pi_star[1])
        with pytest.raises(HorizonMismatchError):
            solution.policy(3)


class TestEvaluatePolicy:
    def test_zero_horizon_value(self, make_mdp, make_policy):
        mdp = make_mdp()
        evaluation = evaluate_policy(mdp, make_policy(mdp))
        assert_allclose(evaluation.v[0], 0.0)
        assert evaluation.horizon == 3

    def test_baseline_policy_has_no_entropy_cost(self):
        mdp = _bandit([2.0, 4.0])
        evaluation = evaluate_policy(mdp, np.full((1, 1, 2), 0.5), tau=10.0)
        assert evaluation.v[1, 0] == pytest.approx(3.0)

    def test_entropy_penalty(self):
        mdp = _bandit([0.0, 0.0])
        tables = np.array([[[1.0, 0.0]]])
        evaluation = evaluate_policy(mdp, tables, tau=0.5)
        assert evaluation.v[1, 0] == pytest.approx(-0.5 * np.log(2))

    def test_uses_policy_temperature(self, make_mdp, make_policy):
        mdp = make_mdp()
        policy = make_policy(mdp, tau=0.25)
        tables = policy.as_tables(mdp)
        assert_allclose(evaluate_policy(mdp, policy).v, evaluate_policy(mdp, tables, 0.25).v)

    def test_table_stack_needs_temperature(self, make_mdp):
        mdp = make_mdp()
        with pytest.raises(ValueError):
            evaluate_policy(mdp, np.full((2, 3, 2), 0.5))


class TestValueGap:
    @pytest.mark.parametrize("gamma", [1.0, 0.8])
    def test_identity_holds(self, make_mdp, make_policy, gamma):
        mdp = make_mdp(4, 3)
        gap = value_gap(mdp, make_policy(mdp, horizon=4, tau=0.4), gamma=gamma)
        assert gap.deviation <= 1e-9
        assert np.all(gap.lhs <= 1e-12)

    def test_zero_at_optimum(self, make_mdp):
        mdp = make_mdp()
        solution = solve_optimal(mdp, 3, 0.6)
        gap = value_gap(mdp, solution.pi_star, 0.6)
        assert_allclose(gap.lhs, 0.0, atol=1e-12)
        assert_allclose(gap.rhs, 0.0, atol=1e-12)

    def test_violation_raises(self, make_mdp, make_policy):
        mdp = make_mdp()
        policy = make_policy(mdp)
        with pytest.raises(IdentityViolationError):
            value_gap(mdp, policy, tol=-1.0)
        gap = value_gap(mdp, policy, check=False, tol=-1.0)
        assert gap.deviation >= 0


class TestInfiniteHorizon:
    def test_fixed_point(self, make_mdp):
        mdp = make_mdp(4, 2)
        solution = solve_infinite_discounted(mdp, tau=0.5, gamma=0.9)
        q = mdp.reward + 0.9 * mdp.transition @ solution.v
        assert_allclose(solution.v, 0.5 * logsumexp(q / 0.5, axis=1, b=0.5), atol=1e-10)

    def test_finite_horizon_approaches_limit(self, make_mdp):
        mdp = make_mdp(3, 2)
        limit = solve_infinite_discounted(mdp, tau=1.0, gamma=0.9)
        finite = solve_optimal(mdp, 300, 1.0, gamma=0.9)
        assert_allclose(finite.v_star[-1], limit.v, atol=1e-8)
        assert_allclose(finite.pi_star[-1], limit.pi, atol=1e-8)

    def test_gamma_must_be_below_one(self, make_mdp):
        with pytest.raises(ValueError):
            solve_infinite_discounted(make_mdp(), 1.0, 1.0)

    def test_iteration_cap(self, make_mdp):
        with pytest.raises(ConvergenceError):
            solve_infinite_discounted(make_mdp(), 1.0, 0.99, max_iter=3)


class TestTruncate:
    def test_solution_prefix_is_shorter_solution(self, make_mdp):
        mdp = make_mdp()
        full = solve_optimal(mdp, 6, 0.5)
        short = truncate(full, 3)
        assert isinstance(short, SoftDpSolution)
        assert_allclose(short.v_star, solve_optimal(mdp, 3, 0.5).v_star, atol=1e-12)

    def test_policy_and_stack(self, make_mdp, make_policy):
        mdp = make_mdp()
        policy = make_policy(mdp, horizon=4)
        assert truncate(policy, 2).horizon == 2
        assert truncate(policy.as_tables(mdp), 2).shape == (2, 3, 2)

    def test_out_of_range(self, make_mdp):
        with pytest.raises(HorizonMismatchError):
            truncate(solve_optimal(make_mdp(), 2, 1.0), 3)
