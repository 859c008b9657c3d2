"""Classic cart-pole dynamics (Euler integration, two push actions).

Reward is ``+1`` per surviving step and ``-10`` on the step that drops the
pole or leaves the track.  The failed state is terminal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np

from app.core.errors import EnvStepError
from app.envs.base import Environment, StepResult
from app.mdp.finite import Trajectory

GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
TOTAL_MASS = MASS_CART + MASS_POLE
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = MASS_POLE * HALF_LENGTH
FORCE_MAG = 10.0
DT = 0.02
X_LIMIT = 2.4
THETA_LIMIT = 12 * 2 * math.pi / 360

ALIVE_REWARD = 1.0
FAIL_REWARD = -10.0

# Encoder divisors for (x, x_dot, theta, theta_dot).
STATE_SCALE = np.array([2.4, 3.0, 0.21, 3.0])


@dataclass(frozen=True)
class CartPoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])

    @property
    def failed(self) -> bool:
        return abs(self.x) > X_LIMIT or abs(self.theta) > THETA_LIMIT


def integrate(state: CartPoleState, force: float) -> CartPoleState:
    """One Euler step of the frictionless cart-pole under horizontal *force*."""
    cos_t, sin_t = math.cos(state.theta), math.sin(state.theta)
    temp = (force + POLE_MASS_LENGTH * state.theta_dot**2 * sin_t) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS
    return CartPoleState(
        state.x + DT * state.x_dot,
        state.x_dot + DT * x_acc,
        state.theta + DT * state.theta_dot,
        state.theta_dot + DT * theta_acc,
    )


def cartpole_step(state: CartPoleState, action: int) -> tuple[CartPoleState, float, bool]:
    """Push left (0) or right (1); returns ``(next_state, reward, terminal)``."""
    if state.failed:
        raise EnvStepError("cart-pole state is terminal")
    if action not in (0, 1):
        raise EnvStepError(f"cart-pole action must be 0 or 1, got {action}")
    nxt = integrate(state, FORCE_MAG if action == 1 else -FORCE_MAG)
    if nxt.failed:
        return nxt, FAIL_REWARD, True
    return nxt, ALIVE_REWARD, False


class CartPoleEnv(Environment):
    env_id: ClassVar[str] = "cartpole"

    def __init__(self, certificate_size: int = 200):
        self.n_actions = 2
        self.state_dim = 4
        self.certificate_size = certificate_size

    def reset(self, rng: np.random.Generator) -> CartPoleState:
        return CartPoleState(*rng.uniform(-0.05, 0.05, size=4))

    def step(self, state: Any, action: int, rng: np.random.Generator) -> StepResult:
        nxt, reward, terminal = cartpole_step(state, action)
        return StepResult(nxt, reward, terminal)

    def is_terminal(self, state: Any) -> bool:
        return state.failed

    def encode(self, state: Any) -> np.ndarray:
        return state.as_array() / STATE_SCALE

    def certificate_states(self, rng: np.random.Generator) -> list[CartPoleState]:
        """A fixed-size uniform sample of the admissible box."""
        bounds = np.array([X_LIMIT, 3.0, THETA_LIMIT, 3.0])
        draws = rng.uniform(-bounds, bounds, size=(self.certificate_size, 4))
        return [CartPoleState(*row) for row in draws]

    def success(self, trajectory: Trajectory) -> bool:
        return not any(s.failed for s in trajectory.states)
