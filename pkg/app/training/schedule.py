"""Exponential decay schedules for the learning rate and the temperature."""

from __future__ import annotations

from dataclasses import dataclass


def decay_schedule(x0: float, x_final: float, episodes: int) -> float:
    """Per-episode factor ``d`` with ``x0 · d^episodes = x_final``."""
    if x0 <= 0 or x_final <= 0:
        raise ValueError(f"schedule endpoints must be positive, got {x0} -> {x_final}")
    if episodes < 1:
        raise ValueError(f"episodes must be positive, got {episodes}")
    return (x_final / x0) ** (1.0 / episodes)


@dataclass(frozen=True)
class ExponentialSchedule:
    """``x_t = x0 · d^t``."""

    x0: float
    x_final: float
    episodes: int

    @property
    def factor(self) -> float:
        return decay_schedule(self.x0, self.x_final, self.episodes)

    def value(self, t: int) -> float:
        if t >= self.episodes:
            return self.x_final
        return self.x0 * self.factor**t
