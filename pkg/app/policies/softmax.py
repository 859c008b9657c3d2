"""Softmax step policies and extended (multi-horizon) policies.

A step policy is ``π(a|s) ∝ π̄(a|s) · exp(h_θ(a, s) / τ)``.  An extended
policy ``π^{(1..n)}`` holds one such policy per remaining horizon; the
policy used with ``i`` steps left is ``step(i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.special import log_softmax, xlogy

from app.config import get_settings
from app.core import diagnostics
from app.core.errors import DimensionMismatchError, HorizonMismatchError, NonFinitePreferenceError
from app.policies.base import PreferenceModel
from app.policies.registry import model_from_json
from app.policies.tables import PolicyTable, as_probs

if TYPE_CHECKING:
    from app.mdp.finite import FiniteMdp

# log(1e-300) is about -690.8; stay above it after normalisation.
_LOG_FLOOR = -680.0


# ── Step policy ─────────────────────────────────────────────────────────


@dataclass(eq=False)
class SoftmaxPolicy:
    """``π_θ`` for a single step ``i`` of an extended policy.

    ``baseline`` is ``None`` (uniform π̄), an ``(A,)`` vector, or an
    ``(S, A)`` table for integer states.
    """

    model: PreferenceModel
    theta: np.ndarray
    tau: float
    baseline: np.ndarray | None = None
    step: int = 1

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.theta.shape != (self.model.n_params,):
            raise DimensionMismatchError(f"theta has shape {self.theta.shape}, model expects ({self.model.n_params},)")

    @property
    def n_actions(self) -> int:
        return self.model.n_actions

    def log_baseline(self, state: Any) -> np.ndarray:
        if self.baseline is None:
            return np.full(self.n_actions, -np.log(self.n_actions))
        if self.baseline.ndim == 1:
            return np.log(self.baseline)
        return np.log(self.baseline[int(state)])

    def log_probs(self, state: Any) -> np.ndarray:
        return _log_probs(self, self.model.preferences(self.theta, state, self.step), state)

    def evaluate(self, state: Any) -> tuple[np.ndarray, np.ndarray]:
        """``(log π(·|s), J(s))`` with the preference Jacobian ``J`` of shape ``(A, P)``."""
        prefs, jac = self.model.evaluate(self.theta, state, self.step)
        return _log_probs(self, prefs, state), jac


def _log_probs(policy: SoftmaxPolicy, prefs: np.ndarray, state: Any) -> np.ndarray:
    bad = np.flatnonzero(~np.isfinite(prefs))
    if bad.size:
        raise NonFinitePreferenceError(int(bad[0]), state)
    clamp = get_settings().logit_clamp
    z = prefs / policy.tau
    over = np.abs(z) > clamp
    if over.any():
        diagnostics.bump(diagnostics.LOGIT_CLAMP, int(over.sum()))
        z = np.clip(z, -clamp, clamp)
    logits = z + policy.log_baseline(state)
    logits = np.maximum(logits - logits.max(), _LOG_FLOOR)
    return log_softmax(logits)


def action_distribution(policy: SoftmaxPolicy, state: Any) -> np.ndarray:
    """Probability vector ``π(·|s)``; every entry is strictly positive."""
    return np.exp(policy.log_probs(state))


def grad_log_policy(policy: SoftmaxPolicy, action: int, state: Any) -> np.ndarray:
    """``∇_θ log π(a|s) = (J[a] - Σ_b π(b|s) J[b]) / τ``."""
    log_p, jac = policy.evaluate(state)
    return (jac[action] - np.exp(log_p) @ jac) / policy.tau


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float | np.ndarray:
    """``KL(p‖q)`` along the last axis (``0·log 0 = 0``)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    kl = np.sum(xlogy(p, p) - xlogy(p, q), axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def as_table(policy: SoftmaxPolicy, mdp: FiniteMdp) -> PolicyTable:
    """Dense ``(S, A)`` table of a step policy over a finite MDP."""
    return PolicyTable(np.stack([action_distribution(policy, s) for s in range(mdp.n_states)]))


# ── Extended policy ─────────────────────────────────────────────────────


@dataclass(eq=False)
class ExtendedPolicy:
    """``π^{(1..n)}``: one parameter block per step, or one block shared by all.

    ``thetas[block_of(i)]`` parameterises step ``i``.  With ``shared=False``
    every step owns its block, so updating ``π^{(i)}`` never moves
    ``π^{(j)}``.
    """

    model: PreferenceModel
    thetas: list[np.ndarray]
    tau: float
    horizon: int
    baseline: np.ndarray | None = None
    shared: bool = False
    _cache: dict[int, SoftmaxPolicy] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise HorizonMismatchError(f"horizon must be at least 1, got {self.horizon}")
        expected = 1 if self.shared else self.horizon
        if len(self.thetas) != expected:
            raise HorizonMismatchError(f"expected {expected} parameter blocks, got {len(self.thetas)}")
        if self.shared and not self.model.supports_shared:
            raise ValueError(f"{self.model.kind} models cannot share parameters across steps")
        self.thetas = [np.array(t, dtype=float) for t in self.thetas]
        if self.baseline is not None:
            self.baseline = as_probs(self.baseline).copy()

    @classmethod
    def create(
        cls,
        model: PreferenceModel,
        horizon: int,
        tau: float,
        *,
        baseline: np.ndarray | None = None,
        shared: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ExtendedPolicy:
        """Fresh policy with ``model.init_params`` in every block."""
        blocks = 1 if shared else horizon
        return cls(model, [model.init_params(rng) for _ in range(blocks)], tau, horizon, baseline, shared)

    def block_of(self, step: int) -> int:
        if not 1 <= step <= self.horizon:
            raise HorizonMismatchError(f"step {step} outside 1..{self.horizon}")
        return 0 if self.shared else step - 1

    def step(self, i: int) -> SoftmaxPolicy:
        """The step policy ``π^{(i)}`` (a view sharing this policy's parameters)."""
        block = self.block_of(i)
        cached = self._cache.get(i)
        if cached is None or cached.tau != self.tau or cached.theta is not self.thetas[block]:
            cached = SoftmaxPolicy(self.model, self.thetas[block], self.tau, self.baseline, i)
            self._cache[i] = cached
        return cached

    def set_tau(self, tau: float) -> None:
        if tau <= 0:
            raise ValueError(f"temperature must be positive, got {tau}")
        self.tau = tau

    def apply(self, block_deltas: list[np.ndarray]) -> None:
        """Add one delta per parameter block."""
        if len(block_deltas) != len(self.thetas):
            raise DimensionMismatchError(f"{len(block_deltas)} deltas for {len(self.thetas)} blocks")
        for theta, delta in zip(self.thetas, block_deltas, strict=True):
            theta += delta

    def max_abs_param(self) -> float:
        return max(float(np.max(np.abs(t))) if t.size else 0.0 for t in self.thetas)

    def as_tables(self, mdp: FiniteMdp) -> np.ndarray:
        """``(n, S, A)`` stack with ``tables[i - 1] = π^{(i)}``."""
        if self.model.n_actions != mdp.n_actions:
            raise DimensionMismatchError(f"policy has {self.model.n_actions} actions, MDP has {mdp.n_actions}")
        return np.stack(
            [
                np.stack([action_distribution(self.step(i), s) for s in range(mdp.n_states)])
                for i in range(1, self.horizon + 1)
            ]
        )

    def truncated(self, m: int) -> ExtendedPolicy:
        """``π^{(1..m)}``, a copy."""
        if not 1 <= m <= self.horizon:
            raise HorizonMismatchError(f"cannot truncate horizon {self.horizon} to {m}")
        thetas = self.thetas if self.shared else self.thetas[:m]
        return ExtendedPolicy(self.model, [t.copy() for t in thetas], self.tau, m, self.baseline, self.shared)

    def copy(self) -> ExtendedPolicy:
        return self.truncated(self.horizon)

    # ── Checkpoint ──────────────────────────────────────────────────────

    def to_json(self) -> dict[str, Any]:
        return {
            "horizon": self.horizon,
            "tau": self.tau,
            "feature_kind": self.model.kind,
            "model": self.model.to_json(),
            "shared": self.shared,
            "thetas": [t.tolist() for t in self.thetas],
            "baseline": None if self.baseline is None else self.baseline.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any], **context: Any) -> ExtendedPolicy:
        """Rebuild a checkpoint; ``context`` is forwarded to the model registry."""
        model = model_from_json(doc["model"], **context)
        baseline = doc.get("baseline")
        return cls(
            model,
            [np.asarray(t, dtype=float) for t in doc["thetas"]],
            float(doc["tau"]),
            int(doc["horizon"]),
            None if baseline is None else np.asarray(baseline, dtype=float),
            bool(doc.get("shared", False)),
        )
