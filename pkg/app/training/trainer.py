"""Training loop: repeated MPG updates with exponentially decaying η and τ."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import get_settings
from app.core import diagnostics
from app.core.errors import ConfigError, DivergenceError, HorizonMismatchError
from app.core.log import timed
from app.dp.soft_dp import objective
from app.envs.base import Environment, FiniteMdpEnv
from app.envs.rollout import sample_episode
from app.mdp.finite import FiniteMdp
from app.policies.base import PreferenceModel
from app.policies.features import TabularFeatures
from app.policies.softmax import ExtendedPolicy
from app.training.schedule import ExponentialSchedule
from app.training.updates import (
    RunningMeanBaseline,
    UpdateRecord,
    mpg_ideal_update,
    mpg_multi_update,
    mpg_sampled_update,
)

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Hyper-parameters of one training run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    horizon: int = Field(ge=1)
    episodes: int = Field(ge=1)
    eta0: float = Field(gt=0)
    eta_final: float | None = Field(default=None, gt=0, description="η after the last episode (None: constant)")
    tau0: float = Field(gt=0)
    tau_final: float | None = Field(default=None, gt=0, description="τ after the last episode (None: constant)")
    variant: Literal["sampled", "ideal", "multi"] = "sampled"
    decay: Literal["exponential", "constant"] = "exponential"
    batch_size: int = Field(default=1, ge=1)
    gamma: float = Field(default=1.0, ge=0.0, le=1.0)
    truncate_absorbed: bool = False
    value_baseline: Literal["zero", "running_mean"] = "zero"
    weight_clip: float | None = Field(default=None, gt=0)
    shared: bool = False
    exact_every: int = Field(default=0, ge=0, description="Log the exact objective every k episodes (finite targets)")
    log_every: int = Field(default=1, ge=1)
    seed: int | None = None

    @model_validator(mode="after")
    def _check_variant(self) -> TrainConfig:
        if self.gamma < 1.0 and self.variant != "ideal":
            raise ValueError("discounting is only supported by the ideal update")
        return self

    @property
    def eta_schedule(self) -> ExponentialSchedule:
        final = self.eta0 if self.decay == "constant" or self.eta_final is None else self.eta_final
        return ExponentialSchedule(self.eta0, final, self.episodes)

    @property
    def tau_schedule(self) -> ExponentialSchedule:
        final = self.tau0 if self.decay == "constant" or self.tau_final is None else self.tau_final
        return ExponentialSchedule(self.tau0, final, self.episodes)

    @property
    def eta_decay(self) -> float:
        return self.eta_schedule.factor

    @property
    def tau_decay(self) -> float:
        return self.tau_schedule.factor


@dataclass
class TrainLog:
    """Per-episode training record (every ``log_every``-th episode and the last)."""

    horizon: int
    rows: list[dict[str, float]] = field(default_factory=list)
    diverged: bool = False
    cancelled: bool = False
    counters: dict[str, int] = field(default_factory=dict)

    def record(
        self, episode: int, objective: float, reward: float, eta: float, tau: float, norms: np.ndarray
    ) -> None:
        row = {"episode": episode, "J_estimate": objective, "cum_reward": reward, "eta": eta, "tau": tau}
        row.update({f"update_norm_{i}": float(v) for i, v in enumerate(norms, start=1)})
        self.rows.append(row)

    @property
    def episodes(self) -> int:
        return int(self.rows[-1]["episode"]) + 1 if self.rows else 0

    @property
    def final_tau(self) -> float:
        return float(self.rows[-1]["tau"]) if self.rows else float("nan")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path


def _default_model(env: Environment) -> PreferenceModel:
    mdp = env.as_mdp()
    if mdp is None:
        raise ConfigError(f"{env.name} has no finite state space; pass a preference model")
    return TabularFeatures(mdp.n_states, mdp.n_actions)


def _sampled_record(
    env: Environment,
    policy: ExtendedPolicy,
    config: TrainConfig,
    eta: float,
    rng: np.random.Generator,
    baseline: RunningMeanBaseline | None,
) -> UpdateRecord:
    total: UpdateRecord | None = None
    for _ in range(config.batch_size):
        trajectory = sample_episode(env, policy, rng, truncate_absorbed=config.truncate_absorbed)
        if config.variant == "multi":
            record = mpg_multi_update(policy, trajectory, eta, clip=config.weight_clip, apply=False)
        else:
            record = mpg_sampled_update(
                policy,
                trajectory,
                eta,
                value_baseline=baseline,
                truncate_absorbed=config.truncate_absorbed,
                apply=False,
            )
        record.objective = trajectory.total_reward
        total = record if total is None else total + record
    assert total is not None
    return total.scaled(1.0 / config.batch_size)


def train(
    target: FiniteMdp | Environment,
    config: TrainConfig,
    *,
    model: PreferenceModel | None = None,
    policy: ExtendedPolicy | None = None,
    rng: np.random.Generator | None = None,
    cancel_check: Callable[[], bool] | None = None,
) -> tuple[ExtendedPolicy, TrainLog]:
    """Run ``config.episodes`` MPG updates and return the trained policy and its log.

    Args:
        target: A finite MDP or an environment.
        config: Hyper-parameters.
        model: Preference model for a fresh policy (tabular on finite targets by default).
        policy: Continue training this policy instead of a fresh one.
        rng: Source of randomness (default: seeded from ``config.seed``).
        cancel_check: Polled once per episode; returning ``True`` stops training early.

    Raises:
        DivergenceError: a parameter left ``[-threshold, threshold]`` or became
            non-finite.  ``partial_log`` carries the log so far.
    """
    env = FiniteMdpEnv(target) if isinstance(target, FiniteMdp) else target
    mdp = env.as_mdp()
    if config.variant == "ideal" and mdp is None:
        raise ConfigError("the ideal update needs a finite MDP")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if policy is None:
        model = model or _default_model(env)
        policy = ExtendedPolicy.create(model, config.horizon, config.tau0, shared=config.shared, rng=rng)
    elif policy.horizon != config.horizon:
        raise HorizonMismatchError(f"policy horizon {policy.horizon} != configured horizon {config.horizon}")

    threshold = get_settings().divergence_threshold
    baseline = RunningMeanBaseline(config.horizon) if config.value_baseline == "running_mean" else None
    eta_schedule, tau_schedule = config.eta_schedule, config.tau_schedule
    completed = 0
    log = TrainLog(config.horizon)
    start_counts = diagnostics.snapshot()

    with timed("train", env=env.name):
        for episode in range(config.episodes):
            if cancel_check and cancel_check():
                log.cancelled = True
                logger.warning("training cancelled", extra={"episode": episode, "env": env.name})
                break

            eta, tau = eta_schedule.value(episode), tau_schedule.value(episode)
            policy.set_tau(tau)
            if config.variant == "ideal":
                record = mpg_ideal_update(mdp, policy, eta, gamma=config.gamma, apply=False)  # type: ignore[arg-type]
                objective_value, reward = float(record.objective), float("nan")  # type: ignore[arg-type]
            else:
                record = _sampled_record(env, policy, config, eta, rng, baseline)
                objective_value, reward = float("nan"), float(record.objective)  # type: ignore[arg-type]
            policy.apply(record.block_deltas(policy))
            if baseline is not None and record.returns is not None:
                baseline.update(record.returns)

            largest = policy.max_abs_param()
            if not np.isfinite(largest) or largest > threshold:
                log.diverged = True
                log.record(episode, objective_value, reward, eta, tau, record.norms)
                log.counters = diagnostics.since(start_counts)
                logger.error(
                    "training diverged: max |θ| = %.3g", largest, extra={"episode": episode, "env": env.name}
                )
                raise DivergenceError(f"parameters diverged at episode {episode} (max |θ| = {largest:.3g})", log)

            last = episode == config.episodes - 1
            if episode % config.log_every == 0 or last:
                if mdp is not None and config.exact_every and (episode % config.exact_every == 0 or last):
                    objective_value = objective(mdp, policy, tau, gamma=config.gamma)
                log.record(episode, objective_value, reward, eta, tau, record.norms)
                logger.debug(
                    "episode %d: J=%.6g R=%.6g", episode, objective_value, reward, extra={"episode": episode}
                )

            completed = episode + 1

    policy.set_tau(tau_schedule.value(completed))
    log.counters = diagnostics.since(start_counts)
    return policy, log