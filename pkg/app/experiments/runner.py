"""Run an experiment grid: train every (cell, agent), evaluate, aggregate, write files.

Each (cell, agent) pair is an independent job with its own random streams
spawned from ``SeedSequence(seed_root)``, so results do not depend on the
number of workers or on completion order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from app.config import get_settings
from app.core.cancellation import cancel_requested
from app.core.errors import ConfigError, DivergenceError
from app.core.executor import map_ordered
from app.core.log import run_context, timed
from app.core.serialization import read_json, write_json
from app.envs.base import Environment
from app.envs.registry import get_environment
from app.envs.rollout import play_games
from app.experiments.report import AgentRecord, ResultRow, aggregate, write_results
from app.experiments.spec import Cell, ExperimentSpec, NetworkSpec
from app.neural.mlp import HorizonEncoding, InputEncoder, NeuralPreference
from app.policies.base import PreferenceModel
from app.policies.features import TabularFeatures
from app.policies.softmax import ExtendedPolicy
from app.training.trainer import train

logger = logging.getLogger(__name__)


def build_model(network: NetworkSpec, env: Environment, encoding: str, env_id: str | None = None) -> PreferenceModel:
    """Preference model for *env* as described by *network*."""
    if network.kind == "tabular":
        mdp = env.as_mdp()
        if mdp is None:
            raise ConfigError(f"tabular features need a finite environment, got {env.name}")
        return TabularFeatures(mdp.n_states, mdp.n_actions)
    mode = "none" if encoding == "separate" else encoding
    encoder = InputEncoder(env.n_actions, env.state_dim, HorizonEncoding(mode), env.encode)  # type: ignore[arg-type]
    return NeuralPreference(encoder, tuple(network.hidden), network.activation, state_encoding=env_id or env.name)


@dataclass(frozen=True)
class AgentJob:
    spec: ExperimentSpec
    cell: Cell
    agent: int
    seed: np.random.SeedSequence
    out_dir: str | None


def run_agent(job: AgentJob) -> AgentRecord:
    """Train and evaluate one agent (top-level so worker processes can pickle it)."""
    spec, cell = job.spec, job.cell
    env = get_environment(spec.env.id, **spec.env.options)
    train_seed, eval_seed, init_seed = job.seed.spawn(3)
    model = build_model(spec.network, env, cell.horizon_encoding, spec.env.id)
    name = f"{cell.cell_id}-a{job.agent:02d}"

    with run_context(f"{spec.name}-{name}"):
        config = cell.config
        init_rng = np.random.default_rng(init_seed)
        policy = ExtendedPolicy.create(model, config.horizon, config.tau0, shared=config.shared, rng=init_rng)
        try:
            policy, log = train(
                env, config, policy=policy, rng=np.random.default_rng(train_seed), cancel_check=cancel_requested
            )
            diverged = False
        except DivergenceError as exc:
            log, diverged = exc.partial_log, True
            logger.warning("agent diverged: %s", exc, extra={"cell": cell.index, "agent": job.agent})

        if job.out_dir is not None:
            out = Path(job.out_dir)
            log.to_csv(out / "train" / f"{name}.csv")
            if not diverged:
                write_json(out / "checkpoints" / f"{name}.json", checkpoint_document(spec, cell, job.agent, policy))

        if diverged:
            return AgentRecord(cell.index, job.agent, True, log.episodes, log.final_tau, 0, 0, 0)
        summary = play_games(env, policy, spec.eval_games, np.random.default_rng(eval_seed))
        logger.info(
            "agent evaluated: success %.1f%%, %.2f steps",
            100 * summary.success_rate,
            summary.avg_steps,
            extra={"cell": cell.index, "agent": job.agent, "env": env.name},
        )
        return AgentRecord(
            cell.index,
            job.agent,
            False,
            log.episodes,
            policy.tau,
            summary.games,
            int(sum(summary.successes)),
            int(sum(summary.steps)),
        )


def checkpoint_document(spec: ExperimentSpec, cell: Cell, agent: int, policy: ExtendedPolicy) -> dict[str, Any]:
    return {
        "experiment": spec.name,
        "cell": cell.label,
        "agent": agent,
        "env": spec.env.model_dump(),
        "policy": policy.to_json(),
    }


def load_checkpoint(path: str | Path, env_id: str) -> tuple[ExtendedPolicy, Environment]:
    """Rebuild a checkpointed policy together with the environment it runs in.

    Environment options stored in the checkpoint apply when its id matches *env_id*.
    """
    if not Path(path).exists():
        raise ConfigError(f"checkpoint not found: {path}")
    doc = read_json(path)
    if not isinstance(doc, dict) or "policy" not in doc:
        raise ConfigError(f"{path} is not a policy checkpoint")
    stored = doc.get("env", {})
    options = stored.get("options", {}) if stored.get("id") == env_id else {}
    env = get_environment(env_id, **options)
    policy = ExtendedPolicy.from_json(doc["policy"], state_features=env.encode)
    if policy.model.n_actions != env.n_actions:
        raise ConfigError(f"checkpoint has {policy.model.n_actions} actions, {env_id} has {env.n_actions}")
    return policy, env


def run_experiment(
    spec: ExperimentSpec, out_dir: str | Path | None = None, *, max_workers: int | None = None
) -> list[ResultRow]:
    """Train ``spec.agents`` agents per grid cell, evaluate them and aggregate per cell.

    Files (when an output directory is given or configured): ``results.csv``,
    ``agents.csv``, ``checkpoints/<cell>-<agent>.json``, ``train/<cell>-<agent>.csv``.
    """
    target = out_dir or spec.output or str(Path(get_settings().results_dir) / spec.name)
    cells = spec.cells()
    cell_seeds = np.random.SeedSequence(spec.seed_root).spawn(len(cells))
    jobs = [
        AgentJob(spec, cell, agent, seed, str(target))
        for cell, cell_seed in zip(cells, cell_seeds, strict=True)
        for agent, seed in enumerate(cell_seed.spawn(spec.agents))
    ]
    with timed("run_experiment", env=spec.env.id):
        records = map_ordered(run_agent, jobs, max_workers=max_workers, cancel_check=cancel_requested)

    rows = []
    for cell in cells:
        cell_records = [r for r in records if r.cell == cell.index]
        rows.append(aggregate(cell.index, cell.label, cell.params, cell_records))
    write_results(rows, target)
    write_json(Path(target) / "experiment.json", spec.model_dump())
    return rows
