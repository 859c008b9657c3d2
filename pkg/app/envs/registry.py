"""Environment registry: factory + discovery.

Usage:
    from app.envs.registry import get_environment, list_environments

    env = get_environment("frozenlake-4x4", encoding="onehot")
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

from app.core.errors import ConfigError
from app.envs.bandit import BanditEnv
from app.envs.base import Environment
from app.envs.cartpole import CartPoleEnv
from app.envs.frozenlake import FrozenLakeEnv, FrozenLakeSpec

EnvFactory = Callable[..., Environment]


def _frozenlake(size: int) -> EnvFactory:
    def factory(
        *,
        encoding: str = "coords",
        uniform_start: bool = False,
        layout: list[str] | None = None,
        **shaping: float,
    ) -> Environment:
        base = FrozenLakeSpec.standard(size)
        spec = FrozenLakeSpec(
            tuple(layout) if layout else base.layout,
            lose=shaping.get("lose", base.lose),
            wall=shaping.get("wall", base.wall),
            move=shaping.get("move", base.move),
            goal=shaping.get("goal", base.goal),
        )
        return FrozenLakeEnv(spec, encoding=encoding, uniform_start=uniform_start)  # type: ignore[arg-type]

    return factory


# ── Static registry ─────────────────────────────────────────────────────

_ENVIRONMENTS: dict[str, EnvFactory] = {
    "bandit": BanditEnv,
    "frozenlake-4x4": _frozenlake(4),
    "frozenlake-8x8": _frozenlake(8),
    "cartpole": CartPoleEnv,
}


def register_environment(env_id: str, factory: EnvFactory) -> None:
    """Register a custom environment at runtime."""
    _ENVIRONMENTS[env_id.lower()] = factory


def get_environment(env_id: str, **options: Any) -> Environment:
    """Instantiate an environment by id.

    Args:
        env_id: ``"bandit"``, ``"frozenlake-4x4"``, ``"frozenlake-8x8"``, ``"cartpole"``
            (or any registered id).
        **options: Factory options, e.g. ``rewards``/``noise`` for bandits,
            ``encoding``/``uniform_start``/shaping for FrozenLake.
    """
    key = env_id.lower().strip()
    factory = _ENVIRONMENTS.get(key)
    if factory is None:
        available = ", ".join(sorted(_ENVIRONMENTS))
        raise ConfigError(f"Unknown environment '{env_id}'. Available: {available}")
    try:
        return factory(**options)
    except TypeError as exc:
        raise ConfigError(f"bad options for environment '{env_id}': {exc}") from exc


def list_environments() -> list[str]:
    """Return sorted list of registered environment ids."""
    return sorted(_ENVIRONMENTS)
