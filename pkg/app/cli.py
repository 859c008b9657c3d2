"""Command-line surface.

    mpg train configs/frozenlake_4x4.toml --workers 8
    mpg evaluate results/fl4/checkpoints/c000-a00.json frozenlake-4x4 --games 100
    mpg certify results/fl4/checkpoints/c000-a00.json frozenlake-4x4
    mpg verify --level fast
    mpg report results/fl4

Exit status: 0 on success, 1 when ``verify`` finds a failing check, 2 on a
library error, 130 when interrupted.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import load_dotenv

from app.certificates.dmap import certify
from app.core.cancellation import interrupt_handler
from app.core.errors import ConfigError, MpgError, RunCancelledError
from app.core.executor import shutdown_executor
from app.core.log import setup_logging
from app.core.serialization import dumps, read_json, write_json
from app.dp.soft_dp import solve_optimal
from app.envs.registry import list_environments
from app.envs.rollout import play_games
from app.experiments.report import read_results, render_markdown, results_frame
from app.experiments.runner import load_checkpoint, run_experiment
from app.experiments.spec import load_experiment
from app.experiments.verify import verify_suite
from app.neural.ntk import ntk_gram

logger = logging.getLogger(__name__)


def _steps(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


def _names(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpg", description="Matryoshka policy gradient experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Run an experiment grid and write its results directory")
    p.add_argument("config", help="TOML or JSON experiment file")
    p.add_argument("--output", default=None, help="Results directory (default: from the file or settings)")
    p.add_argument("--workers", type=int, default=None, help="Worker processes (default: MPG_MAX_WORKERS)")

    envs = ", ".join(list_environments())
    p = sub.add_parser("evaluate", help="Play evaluation games with a checkpointed policy")
    p.add_argument("checkpoint")
    p.add_argument("env", help=f"Environment id ({envs})")
    p.add_argument("--games", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("certify", help="Optimality certificate (finite envs) and NTK test (neural models)")
    p.add_argument("checkpoint")
    p.add_argument("env", help=f"Environment id ({envs})")
    p.add_argument("--steps", type=_steps, default=None, help="Comma-separated steps m (default: all)")
    p.add_argument("--seed", type=int, default=0, help="Seed of the certificate state sample")
    p.add_argument("--output", default=None, help="Write the JSON report here")

    p = sub.add_parser("verify", help="Run the self-check suite")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("--only", type=_names, default=None, help="Comma-separated check names (default: all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="Write the JSON report here")

    p = sub.add_parser("report", help="Render results.csv as a markdown table")
    p.add_argument("results_dir")
    p.add_argument("--title", default=None)
    return parser


# ── Commands ────────────────────────────────────────────────────────────


def cmd_train(args: argparse.Namespace) -> int:
    spec = load_experiment(args.config)
    rows = run_experiment(spec, args.output, max_workers=args.workers)
    print(render_markdown(results_frame(rows), spec.name))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.games < 1:
        raise ConfigError("--games must be at least 1")
    policy, env = load_checkpoint(args.checkpoint, args.env)
    summary = play_games(env, policy, args.games, np.random.default_rng(args.seed))
    print(
        dumps(
            {
                "env": env.name,
                "games": summary.games,
                "success_pct": 100.0 * summary.success_rate,
                "avg_steps": summary.avg_steps,
                "avg_reward": float(np.mean(summary.rewards)),
                "tau": policy.tau,
            }
        )
    )
    return 0


def certificate_document(checkpoint: str, env_id: str, steps: list[int] | None, seed: int) -> dict[str, Any]:
    """Certificate reports for every requested step of a checkpointed policy."""
    policy, env = load_checkpoint(checkpoint, env_id)
    steps = steps or list(range(1, policy.horizon + 1))
    doc: dict[str, Any] = {"env": env.name, "horizon": policy.horizon, "tau": policy.tau}

    mdp = env.as_mdp()
    if mdp is not None:
        oracle = solve_optimal(mdp, policy.horizon, policy.tau, baseline=policy.baseline)
        doc["certificate"] = [r.to_json() for r in certify(mdp, policy, oracle, steps=steps)]

    if policy.model.kind == "neural":
        states = env.certificate_states(np.random.default_rng(seed))
        ntk = []
        for m in steps:
            gram = ntk_gram(policy.model, policy.step(m).theta, states, step=m)
            ntk.append(
                {
                    "step": m,
                    "min_eigenvalue": gram.min_eigenvalue,
                    "max_eigenvalue": gram.max_eigenvalue,
                    "verdict": gram.verdict,
                }
            )
        doc["ntk"] = ntk
    if "certificate" not in doc and "ntk" not in doc:
        raise ConfigError(f"nothing to certify: {env.name} is not finite and the policy is not neural")
    return doc


def cmd_certify(args: argparse.Namespace) -> int:
    doc = certificate_document(args.checkpoint, args.env, args.steps, args.seed)
    if args.output:
        write_json(args.output, doc)
    print(dumps(doc))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    report = verify_suite(args.level, seed=args.seed, only=args.only)
    if args.output:
        write_json(args.output, report.to_json())
    print(report.to_markdown())
    return 0 if report.passed else 1


def cmd_report(args: argparse.Namespace) -> int:
    results = read_results(args.results_dir)
    title = args.title
    if title is None:
        experiment = Path(args.results_dir) / "experiment.json"
        title = read_json(experiment).get("name") if experiment.exists() else None
    print(render_markdown(results, title))
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "certify": cmd_certify,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(console=True)
    try:
        with interrupt_handler():
            return COMMANDS[args.command](args)
    except RunCancelledError as exc:
        logger.warning("%s", exc)
        return 130
    except KeyboardInterrupt:
        logger.warning("aborted")
        return 130
    except MpgError as exc:
        logger.error("%s: %s", type(exc).__name__, exc, extra={"error": type(exc).__name__})
        return 2
    finally:
        shutdown_executor(wait=False)


if __name__ == "__main__":
    sys.exit(main())
