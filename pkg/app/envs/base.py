"""Abstract environment interface and the finite-MDP adapter.

Environments are stateless: the caller holds the state and passes it back
to :meth:`Environment.step`, which keeps rollouts reproducible from a
single ``numpy.random.Generator``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np

from app.core.errors import EnvStepError
from app.mdp.finite import FiniteMdp, Trajectory


@dataclass(frozen=True)
class StepResult:
    next_state: Any
    reward: float
    terminal: bool


class Environment(ABC):
    """Strategy interface shared by every environment."""

    env_id: ClassVar[str] = "base"

    n_actions: int
    state_dim: int

    @abstractmethod
    def reset(self, rng: np.random.Generator) -> Any:
        """Draw an initial state."""

    @abstractmethod
    def step(self, state: Any, action: int, rng: np.random.Generator) -> StepResult:
        """Advance one step.  Stepping a terminal state raises :class:`EnvStepError`."""

    @abstractmethod
    def is_terminal(self, state: Any) -> bool: ...

    @abstractmethod
    def encode(self, state: Any) -> np.ndarray:
        """Feature vector of length :attr:`state_dim` fed to neural policies."""

    @abstractmethod
    def certificate_states(self, rng: np.random.Generator) -> list[Any]:
        """States on which tangent-kernel certificates are evaluated."""

    def as_mdp(self) -> FiniteMdp | None:
        """The underlying finite MDP, when there is one."""
        return None

    def success(self, trajectory: Trajectory) -> bool:
        """Whether an evaluation game counts as a win."""
        return True

    @property
    def name(self) -> str:
        return self.env_id


class FiniteMdpEnv(Environment):
    """Environment that samples a :class:`FiniteMdp`; states are integers."""

    env_id: ClassVar[str] = "finite"

    def __init__(self, mdp: FiniteMdp):
        self.mdp = mdp
        self.n_actions = mdp.n_actions
        self.state_dim = mdp.n_states

    def reset(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.mdp.n_states, p=self.mdp.initial_dist))

    def step(self, state: Any, action: int, rng: np.random.Generator) -> StepResult:
        s = int(state)
        if self.is_terminal(s):
            raise EnvStepError(f"{self.name}: state {s} is terminal")
        if not 0 <= action < self.n_actions:
            raise EnvStepError(f"{self.name}: action {action} outside 0..{self.n_actions - 1}")
        reward = float(self.mdp.reward[s, action])
        if self.mdp.reward_noise > 0:
            reward += float(rng.uniform(-self.mdp.reward_noise, self.mdp.reward_noise))
        nxt = int(rng.choice(self.mdp.n_states, p=self.mdp.transition[s, action]))
        return StepResult(nxt, reward, self.is_terminal(nxt))

    def is_terminal(self, state: Any) -> bool:
        return int(state) in self.mdp.terminal

    def encode(self, state: Any) -> np.ndarray:
        x = np.zeros(self.mdp.n_states)
        x[int(state)] = 1.0
        return x

    def certificate_states(self, rng: np.random.Generator) -> list[int]:
        return list(range(self.mdp.n_states))

    def as_mdp(self) -> FiniteMdp:
        return self.mdp

    @property
    def name(self) -> str:
        return self.mdp.name
