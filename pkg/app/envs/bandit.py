"""Single-state bandit with bounded reward noise."""

from __future__ import annotations

from typing import ClassVar

import numpy as np

from app.envs.base import FiniteMdpEnv
from app.mdp.finite import FiniteMdp


def bandit_mdp(rewards: np.ndarray | list[float], noise: float = 0.0) -> FiniteMdp:
    """One non-terminal state that loops to itself; ``r(a) = rewards[a]``."""
    rewards = np.asarray(rewards, dtype=float)
    n_actions = rewards.shape[0]
    transition = np.ones((1, n_actions, 1))
    return FiniteMdp(transition, rewards[None, :], np.ones(1), reward_noise=noise, name=f"bandit-{n_actions}")


class BanditEnv(FiniteMdpEnv):
    env_id: ClassVar[str] = "bandit"

    def __init__(self, rewards: np.ndarray | list[float] = (1.0, 0.0), noise: float = 0.0):
        super().__init__(bandit_mdp(rewards, noise))
        self.state_dim = 1

    def encode(self, state: int) -> np.ndarray:
        return np.ones(1)
