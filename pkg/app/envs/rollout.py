"""Rollouts of extended policies in an :class:`Environment`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from app.envs.base import Environment
from app.mdp.finite import Trajectory
from app.policies.softmax import ExtendedPolicy


def sample_episode(
    env: Environment, policy: ExtendedPolicy, rng: np.random.Generator, *, truncate_absorbed: bool = False
) -> Trajectory:
    """One ``n``-step episode with ``a_k ~ π^{(n-k)}(·|s_k)``.

    After a terminal state the episode stays there with zero reward.  Actions
    keep being drawn from the policy unless ``truncate_absorbed`` is set, in
    which case they are recorded as 0 and never read by the updates.
    """
    n = policy.horizon
    state = env.reset(rng)
    states, actions, rewards = [state], [], []
    live = n
    for k in range(n):
        absorbed = live < n or env.is_terminal(state)
        if absorbed and live == n:
            live = k
        if absorbed and truncate_absorbed:
            action = 0
        else:
            probs = np.exp(policy.step(n - k).log_probs(state))
            action = int(rng.choice(env.n_actions, p=probs / probs.sum()))
        if absorbed:
            rewards.append(0.0)
        else:
            result = env.step(state, action, rng)
            state = result.next_state
            rewards.append(result.reward)
        actions.append(action)
        states.append(state)
    return Trajectory(states, actions, rewards, live)


def episode_success(env: Environment, trajectory: Trajectory) -> bool:
    """Goal reached (FrozenLake), full horizon survived (CartPole), always for plain MDPs."""
    return env.success(trajectory)


def steps_taken(env: Environment, trajectory: Trajectory) -> int:
    """Steps until the episode first entered a terminal state (``n`` if never)."""
    for k, state in enumerate(trajectory.states[1:], start=1):
        if env.is_terminal(state):
            return k
    return trajectory.horizon


@dataclass
class EvalSummary:
    """Results of evaluation games with the stochastic policy."""

    successes: list[bool] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    @property
    def games(self) -> int:
        return len(self.successes)

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.successes)) if self.successes else 0.0

    @property
    def avg_steps(self) -> float:
        return float(np.mean(self.steps)) if self.steps else float("nan")


def play_games(env: Environment, policy: ExtendedPolicy, games: int, rng: np.random.Generator) -> EvalSummary:
    """Play *games* episodes and record success, length and return of each."""
    summary = EvalSummary()
    for _ in range(games):
        trajectory = sample_episode(env, policy, rng, truncate_absorbed=True)
        summary.successes.append(episode_success(env, trajectory))
        summary.steps.append(steps_taken(env, trajectory))
        summary.rewards.append(trajectory.total_reward)
    return summary
