"""Self-check suite: DP identities, gradient checks, unbiasedness, certificates.

Every check returns a :class:`CheckResult`; an exception inside a check is
recorded as a failure, never propagated.  ``fast`` runs fewer problems and
samples than ``full``.

Usage:
    report = verify_suite("fast")
    print(report.to_markdown())
"""

from __future__ import annotations

import functools
import logging
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from app.certificates.dmap import certify
from app.certificates.spectrum import eigendecompose
from app.core.errors import ConfigError
from app.dp.soft_dp import (
    SoftDpSolution,
    evaluate_policy,
    objective,
    solve_infinite_discounted,
    solve_optimal,
    truncate,
    value_gap,
)
from app.envs.frozenlake import FrozenLakeEnv
from app.mdp.finite import FiniteMdp, random_mdp, sample_batch
from app.neural.mlp import HorizonEncoding, InputEncoder, NeuralPreference
from app.neural.ntk import ntk_gram
from app.policies.features import TabularFeatures
from app.policies.softmax import ExtendedPolicy
from app.training.updates import mpg_ideal_update, mpg_sampled_update

logger = logging.getLogger(__name__)

Level = Literal["fast", "full"]
Solver = Callable[..., SoftDpSolution]

# Family-wise error of the unbiasedness test: the two-sided 3σ rate.
_FAMILY_ALPHA = 2 * stats.norm.sf(3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class VerifyReport:
    level: Level
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_markdown(self) -> str:
        lines = [f"### Verification ({self.level})", "", "| Check | Result | Seconds | Detail |", "|---|---|---|---|"]
        for c in self.checks:
            lines.append(f"| {c.name} | {'PASS' if c.passed else 'FAIL'} | {c.seconds:.2f} | {c.detail} |")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict[str, Any]:
        return {"level": self.level, "passed": self.passed, "checks": [asdict(c) for c in self.checks]}


# ── Helpers ─────────────────────────────────────────────────────────────


def _random_tabular(mdp: FiniteMdp, horizon: int, tau: float, rng: np.random.Generator, scale: float = 1.0):
    model = TabularFeatures(mdp.n_states, mdp.n_actions)
    thetas = [scale * rng.standard_normal(model.n_params) for _ in range(horizon)]
    return ExtendedPolicy(model, thetas, tau, horizon)


# ── Checks ──────────────────────────────────────────────────────────────


def check_dp_identities(level: Level, rng: np.random.Generator, solver: Solver = solve_optimal) -> str:
    """Log-sum-exp, value-gap and horizon-consistency identities on random MDPs."""
    count = 25 if level == "full" else 10
    worst_lse = worst_gap = worst_trunc = 0.0
    for _ in range(count):
        mdp = random_mdp(int(rng.integers(2, 7)), int(rng.integers(2, 5)), rng)
        tau = float(rng.choice([0.1, 1.0]))
        n = int(rng.integers(1, 6))
        solution = solver(mdp, n, tau)

        lse = tau * logsumexp(solution.q_star / tau, axis=2, b=solution.baseline)
        own = evaluate_policy(mdp, solution.pi_star, tau)
        worst_lse = max(
            worst_lse,
            float(np.max(np.abs(lse - solution.v_star[1:]))),
            float(np.max(np.abs(own.v - solution.v_star))),
        )
        worst_gap = max(worst_gap, value_gap(mdp, _random_tabular(mdp, n, tau, rng), check=False).deviation)
        if n > 1:
            m = int(rng.integers(1, n))
            shorter = solver(mdp, m, tau)
            worst_trunc = max(worst_trunc, float(np.max(np.abs(truncate(solution, m).pi_star - shorter.pi_star))))

    if worst_lse > 1e-10 or worst_gap > 1e-9 or worst_trunc > 1e-10:
        raise AssertionError(f"log-sum-exp {worst_lse:.2e}, value gap {worst_gap:.2e}, truncation {worst_trunc:.2e}")
    return f"{count} MDPs; max deviations {worst_lse:.1e} / {worst_gap:.1e} / {worst_trunc:.1e}"


def check_policy_gradient_theorem(level: Level, rng: np.random.Generator) -> str:
    """Ideal update vs central finite differences of ``J_n`` (3 states, 2 actions, n = 3)."""
    count = 10 if level == "full" else 4
    h = 1e-6
    worst = 0.0
    for _ in range(count):
        mdp = random_mdp(3, 2, rng)
        policy = _random_tabular(mdp, 3, 0.7, rng, scale=0.5)
        exact = mpg_ideal_update(mdp, policy, 1.0, apply=False).step_deltas
        for i, theta in enumerate(policy.thetas):
            numeric = np.zeros_like(theta)
            for j in range(theta.size):
                saved = theta[j]
                theta[j] = saved + h
                plus = objective(mdp, policy)
                theta[j] = saved - h
                minus = objective(mdp, policy)
                theta[j] = saved
                numeric[j] = (plus - minus) / (2 * h)
            err = np.linalg.norm(exact[i] - numeric) / max(float(np.linalg.norm(numeric)), 1e-12)
            worst = max(worst, float(err))
    if worst > 1e-5:
        raise AssertionError(f"relative error {worst:.2e}")
    return f"{count} MDPs; max relative error {worst:.1e}"


def check_unbiasedness(level: Level, rng: np.random.Generator) -> str:
    """Mean of sampled updates vs the ideal update, Bonferroni-corrected at the 3σ family rate."""
    samples = 100_000 if level == "full" else 10_000
    mdp = random_mdp(3, 2, rng)
    policy = _random_tabular(mdp, 3, 0.5, rng, scale=0.5)
    exact = np.concatenate(mpg_ideal_update(mdp, policy, 1.0, apply=False).step_deltas)

    total = np.zeros_like(exact)
    total_sq = np.zeros_like(exact)
    for trajectory in sample_batch(mdp, policy, rng, samples):
        delta = np.concatenate(mpg_sampled_update(policy, trajectory, 1.0, apply=False).step_deltas)
        total += delta
        total_sq += delta**2
    mean = total / samples
    sem = np.sqrt(np.maximum(total_sq / samples - mean**2, 0.0) / samples)

    live = sem > 0
    if np.any(np.abs(mean[~live] - exact[~live]) > 1e-12):
        raise AssertionError("a zero-variance coordinate disagrees with the exact gradient")
    if not live.any():
        return f"{samples} trajectories; every coordinate deterministic"
    z = np.abs(mean[live] - exact[live]) / sem[live]
    bound = float(stats.norm.isf(_FAMILY_ALPHA / (2 * live.sum())))
    if z.max() > bound:
        raise AssertionError(f"max |z| = {z.max():.2f} > {bound:.2f}")
    return f"{samples} trajectories; max |z| {z.max():.2f} (bound {bound:.2f})"


def check_global_optimality(level: Level, rng: np.random.Generator, solver: Solver = solve_optimal) -> str:
    """Ideal-update training reaches π*; the certificate passes there and fails on a perturbed policy."""
    count = 10 if level == "full" else 2
    tau, n, eta = 0.5, 3, 0.5
    worst_gap = worst_residual = 0.0
    identity = eigendecompose(np.eye(4 * 2), 2)
    for _ in range(count):
        mdp = random_mdp(4, 2, rng)
        oracle = solver(mdp, n, tau)
        policy = ExtendedPolicy.create(TabularFeatures(4, 2), n, tau)
        for _ in range(50_000):
            mpg_ideal_update(mdp, policy, eta)
            if np.max(np.abs(policy.as_tables(mdp) - oracle.pi_star)) < 1e-7:
                break
        tables = policy.as_tables(mdp)
        worst_gap = max(worst_gap, float(np.max(np.abs(tables - oracle.pi_star))))
        worst_residual = max(worst_residual, max(r.max_residual for r in certify(mdp, policy, oracle)))

        perturbed = tables.copy()
        perturbed[:, :, 0] = np.clip(perturbed[:, :, 0] + 0.05, 0.01, 0.99)
        perturbed[:, :, 1] = 1.0 - perturbed[:, :, 0]
        spectra = {m: identity for m in range(1, n + 1)}
        if all(r.passed for r in certify(mdp, perturbed, oracle, spectra=spectra)):
            raise AssertionError("certificate accepted a perturbed policy")

    if worst_gap > 1e-3 or worst_residual > 1e-6:
        raise AssertionError(f"policy gap {worst_gap:.2e}, residual {worst_residual:.2e}")
    return f"{count} MDPs; max gap {worst_gap:.1e}, max residual {worst_residual:.1e}"


def check_horizon_limit(level: Level, rng: np.random.Generator, solver: Solver = solve_optimal) -> str:
    """``π*^{(n)}`` of horizon ``n`` approaches the discounted fixed point (γ = 0.9)."""
    count = 5 if level == "full" else 2
    horizon = 60
    worst = 0.0
    for _ in range(count):
        mdp = random_mdp(4, 3, rng)
        limit = solve_infinite_discounted(mdp, 1.0, 0.9)
        # Members do not depend on the horizon, so one solution holds every π*^{(n)}.
        solution = solver(mdp, horizon, 1.0, gamma=0.9)
        dist = np.abs(solution.pi_star - limit.pi).sum(axis=2).max(axis=1)
        if np.any(np.diff(dist[4:]) > 1e-12):
            raise AssertionError("distance to the limit increased beyond n = 5")
        worst = max(worst, float(dist[-1]))
    if worst > 1e-3:
        raise AssertionError(f"distance at n = {horizon} is {worst:.2e}")
    return f"{count} MDPs; max L1 distance at n = {horizon}: {worst:.1e}"


def check_neural(level: Level, rng: np.random.Generator) -> str:
    """Backprop vs finite differences; NTK symmetric PSD, positive definite at width 256."""
    env = FrozenLakeEnv()
    width = 256 if level == "full" else 64
    encoder = InputEncoder(env.n_actions, env.state_dim, HorizonEncoding("inverse"), env.encode)
    model = NeuralPreference(encoder, (width, width))
    theta = model.init_params(rng)
    mlp = model.network(theta.copy())
    x = encoder.encode(1, 5, 3)
    _, jac = mlp.jacobian_batch(x)

    h = 1e-6
    indices = rng.choice(theta.size, size=min(theta.size, 200), replace=False)
    numeric = np.empty(indices.size)
    for k, j in enumerate(indices):
        saved = mlp.params[j]
        mlp.params[j] = saved + h
        plus = mlp.forward_batch(x)[0][0]
        mlp.params[j] = saved - h
        minus = mlp.forward_batch(x)[0][0]
        mlp.params[j] = saved
        numeric[k] = (plus - minus) / (2 * h)
    err = float(np.linalg.norm(jac[0][indices] - numeric) / max(float(np.linalg.norm(numeric)), 1e-12))
    if err > 1e-5:
        raise AssertionError(f"backprop relative error {err:.2e}")

    gram = ntk_gram(model, theta, env.certificate_states(rng), step=3)
    if not np.allclose(gram.matrix, gram.matrix.T) or gram.min_eigenvalue < -1e-8 * gram.max_eigenvalue:
        raise AssertionError("NTK Gram is not symmetric PSD")
    if level == "full" and not gram.passed:
        raise AssertionError(f"NTK not positive definite: λ_min={gram.min_eigenvalue:.2e}")
    ratio = gram.min_eigenvalue / gram.max_eigenvalue
    return f"width {width}; backprop error {err:.1e}; NTK λ_min/λ_max {ratio:.1e} ({gram.verdict})"


CHECKS: dict[str, Callable[..., str]] = {
    "dp-identities": check_dp_identities,
    "policy-gradient-theorem": check_policy_gradient_theorem,
    "unbiasedness": check_unbiasedness,
    "global-optimality": check_global_optimality,
    "horizon-limit": check_horizon_limit,
    "neural-gradients-ntk": check_neural,
}

_SOLVER_CHECKS = frozenset({"dp-identities", "global-optimality", "horizon-limit"})


def verify_suite(
    level: Level = "fast", *, seed: int = 0, solver: Solver = solve_optimal, only: list[str] | None = None
) -> VerifyReport:
    """Run the checks (all, or those named in *only*).

    *solver* replaces the soft-DP solver inside the checks that use it, which
    lets tests seed a faulty recursion and watch the suite catch it.
    """
    unknown = sorted(set(only or ()) - set(CHECKS))
    if unknown:
        raise ConfigError(f"unknown check(s) {unknown}. Available: {', '.join(CHECKS)}")
    report = VerifyReport(level)
    names = list(CHECKS) if only is None else only
    streams = np.random.SeedSequence(seed).spawn(len(CHECKS))
    for name, stream in zip(CHECKS, streams, strict=True):
        if name not in names:
            continue
        check = CHECKS[name]
        if name in _SOLVER_CHECKS:
            check = functools.partial(check, solver=solver)
        start = time.perf_counter()
        try:
            detail, passed = check(level, np.random.default_rng(stream)), True
        except Exception as exc:
            detail, passed = f"{type(exc).__name__}: {exc}", False
        seconds = time.perf_counter() - start
        logger.info(
            "verify %s: %s", name, "PASS" if passed else "FAIL", extra={"step": name, "duration_ms": 1000 * seconds}
        )
        report.checks.append(CheckResult(name, passed, detail, seconds))
    return report
