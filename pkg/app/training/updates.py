"""Matryoshka policy-gradient update rules.

All rules produce one parameter delta per step ``i`` of an extended policy
and, unless ``apply=False``, add them to the policy's parameter blocks.  In
shared-parameter mode the per-step contributions are summed into the single
block.

Time index ``k`` runs along a trajectory; the policy acting at time ``k`` is
``π^{(n-k)}``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from app.config import get_settings
from app.core import diagnostics
from app.core.errors import HorizonMismatchError
from app.dp.soft_dp import evaluate_policy
from app.mdp.finite import FiniteMdp, Trajectory, state_marginals
from app.policies.softmax import ExtendedPolicy, SoftmaxPolicy
from app.policies.tables import baseline_array

#: ``v(i, s)`` subtracted from the sampled return of step ``i`` (0 when absent).
ValueBaseline = Callable[[int, Any], float]


@dataclass(eq=False)
class UpdateRecord:
    """Outcome of one update.

    ``step_deltas[i - 1]`` is the contribution to ``π^{(i)}``'s parameters.
    """

    step_deltas: list[np.ndarray]
    returns: np.ndarray | None = None
    objective: float | None = None
    clipped: int = 0

    @property
    def horizon(self) -> int:
        return len(self.step_deltas)

    @property
    def norms(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(d)) for d in self.step_deltas])

    def block_deltas(self, policy: ExtendedPolicy) -> list[np.ndarray]:
        if policy.shared:
            return [np.sum(self.step_deltas, axis=0)]
        return list(self.step_deltas)

    def scaled(self, factor: float) -> UpdateRecord:
        return UpdateRecord([d * factor for d in self.step_deltas], self.returns, self.objective, self.clipped)

    def __add__(self, other: UpdateRecord) -> UpdateRecord:
        if other.horizon != self.horizon:
            raise HorizonMismatchError("cannot add update records of different horizons")
        return UpdateRecord(
            [a + b for a, b in zip(self.step_deltas, other.step_deltas, strict=True)],
            other.returns,
            other.objective,
            self.clipped + other.clipped,
        )


@dataclass
class RunningMeanBaseline:
    """``v(i, s) = `` exponential moving average of past returns of step ``i`` (state-independent)."""

    horizon: int
    decay: float = 0.99
    means: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.means = np.zeros(self.horizon)

    def __call__(self, step: int, state: Any) -> float:
        return float(self.means[step - 1])

    def update(self, returns: np.ndarray) -> None:
        self.means = self.decay * self.means + (1.0 - self.decay) * returns


def _check_horizon(policy: ExtendedPolicy, trajectory: Trajectory) -> int:
    n = policy.horizon
    if trajectory.horizon != n:
        raise HorizonMismatchError(f"trajectory has {trajectory.horizon} steps, policy horizon is {n}")
    return n


def _finish(policy: ExtendedPolicy, record: UpdateRecord, apply: bool) -> UpdateRecord:
    if apply:
        policy.apply(record.block_deltas(policy))
    return record


def _temperature(policy_tau: float, tau: float | None) -> float:
    """The policy's own temperature; an explicit ``tau`` must agree with it."""
    if tau is not None and not np.isclose(tau, policy_tau, rtol=1e-12, atol=0.0):
        raise ValueError(f"tau={tau} differs from the policy temperature {policy_tau}; call set_tau first")
    return policy_tau


def _score(step_policy: SoftmaxPolicy, log_p: np.ndarray, jac: np.ndarray, action: int) -> np.ndarray:
    return (jac[action] - np.exp(log_p) @ jac) / step_policy.tau


# ── Sampled single-trajectory update ────────────────────────────────────


def mpg_sampled_update(
    policy: ExtendedPolicy,
    trajectory: Trajectory,
    eta: float,
    tau: float | None = None,
    *,
    value_baseline: ValueBaseline | None = None,
    truncate_absorbed: bool = False,
    apply: bool = True,
) -> UpdateRecord:
    """One MPG step from a single ``n``-step trajectory.

    For every ``i``, ``θ^{(i)} += η C_i ∇ log π^{(i)}(A_{n-i} | S_{n-i})`` with
    ``C_i = Σ_{ℓ=n-i}^{n-1} [R_ℓ - τ log(π^{(n-ℓ)}(A_ℓ|S_ℓ) / π̄(A_ℓ|S_ℓ))]``.

    With ``truncate_absorbed`` the sums stop at the first terminal state and
    steps acting after it receive no update.
    """
    n = _check_horizon(policy, trajectory)
    tau = _temperature(policy.tau, tau)
    stop = trajectory.live if truncate_absorbed else n

    gains = np.zeros(n)
    scores: list[np.ndarray | None] = [None] * n
    for k in range(stop):
        step_policy = policy.step(n - k)
        state, action = trajectory.states[k], trajectory.actions[k]
        log_p, jac = step_policy.evaluate(state)
        log_base = step_policy.log_baseline(state)[action]
        gains[k] = trajectory.rewards[k] - tau * (log_p[action] - log_base)
        scores[k] = _score(step_policy, log_p, jac, action)
    suffix = np.cumsum(gains[::-1])[::-1]

    returns = np.zeros(n)
    deltas = []
    for i in range(1, n + 1):
        k = n - i
        score = scores[k]
        if score is None:
            deltas.append(np.zeros(policy.model.n_params))
            continue
        returns[i - 1] = suffix[k]
        advantage = suffix[k] - (value_baseline(i, trajectory.states[k]) if value_baseline else 0.0)
        deltas.append(eta * advantage * score)
    return _finish(policy, UpdateRecord(deltas, returns), apply)


# ── Ideal (exact-expectation) update ────────────────────────────────────


def mpg_ideal_update(
    mdp: FiniteMdp,
    policy: ExtendedPolicy,
    eta: float,
    tau: float | None = None,
    gamma: float = 1.0,
    *,
    apply: bool = True,
) -> UpdateRecord:
    """Exact expectation of the sampled update (the gradient of ``J_n``).

    ``∇_i = γ^{n-i} Σ_s m(s) Σ_a π(a|s) [Q(s,a) - τ log(π/π̄)(a|s) - V(s)] ∇ log π(a|s)``
    with every quantity taken at step ``i`` and ``m`` the exact law of ``S_{n-i}``.
    """
    tau = _temperature(policy.tau, tau)
    n = policy.horizon
    tables = policy.as_tables(mdp)
    evaluation = evaluate_policy(mdp, tables, tau, gamma, policy.baseline)
    laws = state_marginals(mdp, tables)
    log_base = np.log(baseline_array(policy.baseline, mdp.n_states, mdp.n_actions))

    deltas = []
    for i in range(1, n + 1):
        pi = tables[i - 1]
        advantage = evaluation.q[i - 1] - tau * (np.log(pi) - log_base) - evaluation.v[i][:, None]
        weights = gamma ** (n - i) * laws[n - i][:, None] * pi * advantage
        step_policy = policy.step(i)
        grad = np.zeros(policy.model.n_params)
        for s in np.flatnonzero(laws[n - i] > 0):
            jac = policy.model.jacobian(step_policy.theta, int(s), i)
            w = weights[s]
            grad += (w - w.sum() * pi[s]) @ jac
        deltas.append(eta * grad / step_policy.tau)
    objective = float(mdp.initial_dist @ evaluation.v[n])
    return _finish(policy, UpdateRecord(deltas, objective=objective), apply)


def bandit_ideal_update(
    step_policy: SoftmaxPolicy, rewards: np.ndarray, eta: float, tau: float | None = None
) -> np.ndarray:
    """Closed-form ideal delta ``η ∇_θ J_1`` of a single-state bandit with mean rewards ``r(a)``.

    ``η Σ_a π(a) [r(a) - τ log(π(a)/π̄(a))] ∇ log π(a)``; the parameters are not modified.
    """
    tau = _temperature(step_policy.tau, tau)
    log_p, jac = step_policy.evaluate(0)
    pi = np.exp(log_p)
    weights = pi * (np.asarray(rewards, dtype=float) - tau * (log_p - step_policy.log_baseline(0)))
    return eta * (weights - weights.sum() * pi) @ jac / step_policy.tau


# ── Multi-update (importance-weighted) ──────────────────────────────────


def mpg_multi_update(
    policy: ExtendedPolicy,
    trajectory: Trajectory,
    eta: float,
    tau: float | None = None,
    clip: float | None = None,
    *,
    apply: bool = True,
) -> UpdateRecord:
    """Update every ``π^{(i)}`` from every window ``k = 0..n-i`` of one trajectory.

    ``θ^{(i)} += η Σ_k min(ρ_{i,k}, clip) C_{k,i} ∇ log π^{(i)}(A_k|S_k)`` with
    ``ρ_{i,k} = Π_ℓ π^{(i-ℓ)}(A_{k+ℓ}|S_{k+ℓ}) / π^{(n-k-ℓ)}(A_{k+ℓ}|S_{k+ℓ})`` and
    ``C_{k,i} = Σ_ℓ [R_{k+ℓ} - τ log(π^{(i-ℓ)}/π̄)(A_{k+ℓ}|S_{k+ℓ})]``,
    ``ℓ = 0..i-1``.  Each clipped weight bumps the ``weight_clip`` counter.
    """
    n = _check_horizon(policy, trajectory)
    tau = _temperature(policy.tau, tau)
    clip = get_settings().weight_clip if clip is None else clip

    cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def evaluated(j: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        key = (j, k)
        if key not in cache:
            cache[key] = policy.step(j).evaluate(trajectory.states[k])
        return cache[key]

    def log_prob(j: int, k: int) -> float:
        return float(evaluated(j, k)[0][trajectory.actions[k]])

    log_base = [
        float(policy.step(n - k).log_baseline(trajectory.states[k])[trajectory.actions[k]]) for k in range(n)
    ]

    clipped = 0
    deltas = []
    for i in range(1, n + 1):
        delta = np.zeros(policy.model.n_params)
        for k in range(n - i + 1):
            log_rho = 0.0
            gain = 0.0
            for ell in range(i):
                t = k + ell
                lp = log_prob(i - ell, t)
                log_rho += lp - log_prob(n - t, t)
                gain += trajectory.rewards[t] - tau * (lp - log_base[t])
            rho = float(np.exp(min(log_rho, 700.0)))
            if rho > clip:
                rho = clip
                clipped += 1
            log_p, jac = evaluated(i, k)
            delta += rho * gain * _score(policy.step(i), log_p, jac, trajectory.actions[k])
        deltas.append(eta * delta)
    diagnostics.bump(diagnostics.WEIGHT_CLIP, clipped)
    return _finish(policy, UpdateRecord(deltas, clipped=clipped), apply)
