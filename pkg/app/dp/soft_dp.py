"""Exact soft dynamic programming on finite MDPs.

Conventions (``i`` counts remaining steps):

* ``Q^{(i)}(s, a) = r(a, s) + γ Σ_{s'} p(s'|s, a) V^{(i-1)}(s')`` with ``V^{(0)} = 0``
* ``V_π^{(i)}(s) = Σ_a π^{(i)}(a|s) [Q_π^{(i)}(s, a) - τ log(π^{(i)}(a|s) / π̄(a|s))]``
* ``V*^{(i)}(s) = τ log Σ_a π̄(a|s) exp(Q*^{(i)}(s, a) / τ)``
* ``π*^{(i)}(a|s) = π̄(a|s) exp((Q*^{(i)}(s, a) - V*^{(i)}(s)) / τ)``

Arrays are stored with ``v[i]`` holding ``V^{(i)}`` (so ``v`` has ``n + 1``
rows) and ``q[i - 1]`` holding ``Q^{(i)}``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import logsumexp, xlogy

from app.config import get_settings
from app.core.errors import ConvergenceError, HorizonMismatchError, IdentityViolationError
from app.mdp.finite import FiniteMdp, policy_stack, transition_matrix
from app.policies.softmax import ExtendedPolicy, kl_divergence
from app.policies.tables import PolicyTable, baseline_array

logger = logging.getLogger(__name__)


# ── Result types ────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class SoftDpSolution:
    """Optimal extended policy ``π*^{(1..n)}`` with its value functions."""

    horizon: int
    tau: float
    gamma: float
    v_star: np.ndarray
    q_star: np.ndarray
    pi_star: np.ndarray
    baseline: np.ndarray

    def policy(self, i: int) -> PolicyTable:
        if not 1 <= i <= self.horizon:
            raise HorizonMismatchError(f"step {i} outside 1..{self.horizon}")
        return PolicyTable(self.pi_star[i - 1])

    def to_json(self) -> dict[str, Any]:
        return {
            "horizon": self.horizon,
            "tau": self.tau,
            "gamma": self.gamma,
            "v_star": self.v_star.tolist(),
            "q_star": self.q_star.tolist(),
            "pi_star": self.pi_star.tolist(),
            "baseline": self.baseline.tolist(),
        }


@dataclass(frozen=True, eq=False)
class PolicyEvaluation:
    """``V_π^{(0..n)}`` and ``Q_π^{(1..n)}`` of a fixed extended policy."""

    v: np.ndarray
    q: np.ndarray

    @property
    def horizon(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True, eq=False)
class InfiniteSolution:
    """Fixed point of the discounted soft Bellman operator."""

    v: np.ndarray
    q: np.ndarray
    pi: np.ndarray
    iterations: int


@dataclass(frozen=True, eq=False)
class ValueGap:
    """Both sides of ``V_π^{(n)} - V*^{(n)} = -τ E[Σ_k γ^k KL(π^{(n-k)} ‖ π*^{(n-k)})(S_k)]``, per start state."""

    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def deviation(self) -> float:
        return float(np.max(np.abs(self.lhs - self.rhs)))


# ── Helpers ─────────────────────────────────────────────────────────────


def _resolve(
    mdp: FiniteMdp, policy: ExtendedPolicy | np.ndarray, tau: float | None, baseline: Any
) -> tuple[np.ndarray, float, np.ndarray]:
    tables = policy_stack(mdp, policy)
    if isinstance(policy, ExtendedPolicy):
        tau = policy.tau if tau is None else tau
        baseline = policy.baseline if baseline is None else baseline
    if tau is None or tau <= 0:
        raise ValueError(f"a positive temperature is required, got {tau}")
    return tables, float(tau), baseline_array(baseline, mdp.n_states, mdp.n_actions)


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"discount must lie in [0, 1], got {gamma}")


def _soft_max(q: np.ndarray, base: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """``(V, π)`` of the soft-greedy step for action values ``q``."""
    v = tau * logsumexp(q / tau, axis=1, b=base)
    pi = base * np.exp((q - v[:, None]) / tau)
    return v, pi / pi.sum(axis=1, keepdims=True)


# ── Operations ──────────────────────────────────────────────────────────


def evaluate_policy(
    mdp: FiniteMdp,
    policy: ExtendedPolicy | np.ndarray,
    tau: float | None = None,
    gamma: float = 1.0,
    baseline: Any = None,
) -> PolicyEvaluation:
    """Backward recursion for ``V_π`` and ``Q_π`` of an extended policy."""
    _check_gamma(gamma)
    tables, tau, base = _resolve(mdp, policy, tau, baseline)
    n = tables.shape[0]
    v = np.zeros((n + 1, mdp.n_states))
    q = np.empty((n, mdp.n_states, mdp.n_actions))
    log_base = np.log(base)
    for i in range(1, n + 1):
        pi = tables[i - 1]
        q[i - 1] = mdp.reward + gamma * mdp.transition @ v[i - 1]
        entropy_term = np.sum(xlogy(pi, pi) - pi * log_base, axis=1)
        v[i] = np.sum(pi * q[i - 1], axis=1) - tau * entropy_term
    return PolicyEvaluation(v, q)


def solve_optimal(
    mdp: FiniteMdp, horizon: int, tau: float, gamma: float = 1.0, baseline: Any = None
) -> SoftDpSolution:
    """Soft Bellman recursion for the optimal extended policy of horizon ``n``."""
    _check_gamma(gamma)
    if horizon < 1:
        raise HorizonMismatchError(f"horizon must be at least 1, got {horizon}")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    base = baseline_array(baseline, mdp.n_states, mdp.n_actions)
    v = np.zeros((horizon + 1, mdp.n_states))
    q = np.empty((horizon, mdp.n_states, mdp.n_actions))
    pi = np.empty_like(q)
    for i in range(1, horizon + 1):
        q[i - 1] = mdp.reward + gamma * mdp.transition @ v[i - 1]
        v[i], pi[i - 1] = _soft_max(q[i - 1], base, tau)
    logger.debug(
        "soft DP solved: J*=%.6g", float(mdp.initial_dist @ v[horizon]), extra={"env": mdp.name, "step": horizon}
    )
    return SoftDpSolution(horizon, float(tau), float(gamma), v, q, pi, base)


def solve_infinite_discounted(
    mdp: FiniteMdp,
    tau: float,
    gamma: float,
    tol: float = 1e-12,
    baseline: Any = None,
    max_iter: int | None = None,
) -> InfiniteSolution:
    """Soft value iteration to ``tol`` in sup-norm.

    The iteration cap defaults to the contraction bound implied by the first
    update plus a margin; exceeding it raises :class:`ConvergenceError`.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"infinite-horizon discount must lie in [0, 1), got {gamma}")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    base = baseline_array(baseline, mdp.n_states, mdp.n_actions)
    v = np.zeros(mdp.n_states)
    cap = max_iter
    factor = gamma / (1.0 - gamma) if gamma > 0 else 0.0
    for it in itertools.count(1):
        q = mdp.reward + gamma * mdp.transition @ v
        v_new, pi = _soft_max(q, base, tau)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta * factor <= tol or delta == 0.0:
            return InfiniteSolution(v, q, pi, it)
        if cap is None:
            cap = math.ceil(math.log(tol / (factor * delta)) / math.log(gamma)) + 100
        if it >= cap:
            raise ConvergenceError(f"soft value iteration did not reach tol={tol:g} within {cap} iterations")


def truncate(x: ExtendedPolicy | SoftDpSolution | np.ndarray, m: int) -> Any:
    """``T_{n,m}``: keep steps ``1..m`` of an extended policy, table stack or solution."""
    n = x.horizon if isinstance(x, ExtendedPolicy | SoftDpSolution) else np.asarray(x).shape[0]
    if not 1 <= m <= n:
        raise HorizonMismatchError(f"cannot truncate horizon {n} to {m}")
    if isinstance(x, ExtendedPolicy):
        return x.truncated(m)
    if isinstance(x, SoftDpSolution):
        return SoftDpSolution(
            m, x.tau, x.gamma, x.v_star[: m + 1].copy(), x.q_star[:m].copy(), x.pi_star[:m].copy(), x.baseline
        )
    return np.array(x[:m])


def value_gap(
    mdp: FiniteMdp,
    policy: ExtendedPolicy | np.ndarray,
    tau: float | None = None,
    gamma: float = 1.0,
    baseline: Any = None,
    *,
    check: bool = True,
    tol: float | None = None,
) -> ValueGap:
    """Compute both sides of the value-gap identity exactly, per start state.

    The expectation on the right is propagated with the state laws started
    from every ``s``.  With ``check`` (default) a deviation above ``tol``
    raises :class:`IdentityViolationError`.
    """
    _check_gamma(gamma)
    tables, tau, base = _resolve(mdp, policy, tau, baseline)
    n = tables.shape[0]
    evaluation = evaluate_policy(mdp, tables, tau, gamma, base)
    solution = solve_optimal(mdp, n, tau, gamma, base)
    lhs = evaluation.v[n] - solution.v_star[n]

    laws = np.eye(mdp.n_states)
    acc = np.zeros(mdp.n_states)
    for k in range(n):
        i = n - k
        kl = kl_divergence(tables[i - 1], solution.pi_star[i - 1])
        acc += gamma**k * (laws @ kl)
        laws = laws @ transition_matrix(mdp, tables[i - 1])
    gap = ValueGap(lhs, -tau * acc)

    tol = get_settings().gap_tol if tol is None else tol
    if check and gap.deviation > tol:
        raise IdentityViolationError("value-gap identity violated", gap.lhs, gap.rhs, gap.deviation)
    return gap


def objective(
    mdp: FiniteMdp,
    policy: ExtendedPolicy | np.ndarray,
    tau: float | None = None,
    gamma: float = 1.0,
    baseline: Any = None,
) -> float:
    """``J_n(π) = Σ_s ν_0(s) V_π^{(n)}(s)``."""
    evaluation = evaluate_policy(mdp, policy, tau, gamma, baseline)
    return float(mdp.initial_dist @ evaluation.v[evaluation.horizon])
