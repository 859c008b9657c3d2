"""Finite Markov decision processes.

A :class:`FiniteMdp` stores dense arrays indexed ``[s, a]`` (rewards) and
``[s, a, s']`` (transitions).  Terminal states are absorbing with zero
reward, so every trajectory sampled for a horizon ``n`` has exactly ``n``
steps.

Extended policies are handled here as stacks of tables ``tables[i - 1]``
holding ``π^{(i)}``; the policy used at step ``k`` of an ``n``-step
trajectory is ``tables[n - k - 1]``.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from app.core.errors import DimensionMismatchError, InvalidMdpError
from app.policies.tables import PolicyTable, as_probs

if TYPE_CHECKING:
    from app.policies.softmax import ExtendedPolicy

_TOL = 1e-12


# ── Domain types ────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Immutable finite MDP ``(S, A, p, r, ν_0)``.

    Attributes:
        transition: ``p[s, a, s']``.
        reward: mean reward ``r(a, s)`` stored as ``reward[s, a]``.
        initial_dist: ``ν_0``.
        terminal: indices of absorbing zero-reward states.
        reward_noise: half-width ``w`` of the uniform noise added to sampled rewards.
        r_max: declared reward bound (defaults to ``max |r|``).
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    terminal: frozenset[int] = frozenset()
    reward_noise: float = 0.0
    r_max: float | None = None
    name: str = "mdp"

    def __post_init__(self) -> None:
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        nu = np.array(self.initial_dist, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise DimensionMismatchError(f"transition must have shape (S, A, S), got {p.shape}")
        n_states, n_actions = p.shape[:2]
        if r.shape != (n_states, n_actions):
            raise DimensionMismatchError(f"reward must have shape {(n_states, n_actions)}, got {r.shape}")
        if nu.shape != (n_states,):
            raise DimensionMismatchError(f"initial_dist must have shape ({n_states},), got {nu.shape}")
        terminal = frozenset(int(s) for s in self.terminal)
        if any(s < 0 or s >= n_states for s in terminal):
            raise InvalidMdpError(f"terminal index out of range: {sorted(terminal)}")
        if self.reward_noise < 0:
            raise InvalidMdpError("reward_noise must be non-negative")
        for arr in (p, r, nu):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_dist", nu)
        object.__setattr__(self, "terminal", terminal)
        if self.r_max is None:
            object.__setattr__(self, "r_max", float(np.max(np.abs(r))) if r.size else 0.0)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal)] = True
        return mask

    def with_initial(self, initial_dist: np.ndarray) -> FiniteMdp:
        """Copy of this MDP with a different ``ν_0``."""
        return FiniteMdp(
            self.transition, self.reward, initial_dist, self.terminal, self.reward_noise, self.r_max, self.name
        )

    def uniform_initial(self) -> FiniteMdp:
        """Copy with ``ν_0`` uniform over all states (theory setting)."""
        return self.with_initial(np.full(self.n_states, 1.0 / self.n_states))

    # ── JSON ────────────────────────────────────────────────────────────

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "mean_reward": self.reward.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "terminal": sorted(self.terminal),
            "reward_noise": self.reward_noise,
            "r_max": self.r_max,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> FiniteMdp:
        try:
            mdp = cls(
                transition=np.asarray(doc["transition"], dtype=float),
                reward=np.asarray(doc["mean_reward"], dtype=float),
                initial_dist=np.asarray(doc["initial_dist"], dtype=float),
                terminal=frozenset(doc.get("terminal", [])),
                reward_noise=float(doc.get("reward_noise", 0.0)),
                r_max=doc.get("r_max"),
                name=doc.get("name", "mdp"),
            )
        except KeyError as exc:
            raise InvalidMdpError(f"MDP document is missing field {exc}") from exc
        if mdp.n_states != doc.get("n_states", mdp.n_states) or mdp.n_actions != doc.get("n_actions", mdp.n_actions):
            raise DimensionMismatchError("declared n_states / n_actions disagree with the arrays")
        return mdp


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Record ``(s_0, a_0, r_0, …, s_{n-1}, a_{n-1}, r_{n-1}, s_n)``.

    ``live`` is the number of steps taken before the first terminal state
    was entered (``n`` when none was).
    """

    states: list[Any]
    actions: list[int]
    rewards: list[float]
    live: int = -1

    def __post_init__(self) -> None:
        n = len(self.actions)
        if len(self.states) != n + 1 or len(self.rewards) != n:
            raise DimensionMismatchError(
                f"inconsistent trajectory: {len(self.states)} states, {n} actions, {len(self.rewards)} rewards"
            )
        if self.live < 0:
            object.__setattr__(self, "live", n)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


@dataclass(frozen=True, eq=False)
class StateDistribution:
    """Probability vector over the states of a finite MDP."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or np.any(probs < -_TOL) or abs(probs.sum() - 1.0) > 1e-10:
            raise DimensionMismatchError("state distribution must be a probability vector")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`.  ``issues`` lists every violated invariant."""

    issues: list[str] = field(default_factory=list)
    irreducible: bool = False
    transient_connected: bool = False

    @property
    def valid(self) -> bool:
        return not self.issues


# ── Operations ──────────────────────────────────────────────────────────


def validate(mdp: FiniteMdp) -> ValidationReport:
    """Check every FiniteMdp invariant and the reachability structure.

    ``irreducible`` is true when the graph ``s → s'`` (edge iff some action
    moves there with positive probability) is strongly connected over all
    states; ``transient_connected`` is the same test restricted to
    non-terminal states.  Violations are reported, never raised.
    """
    report = ValidationReport()
    p, r = mdp.transition, mdp.reward

    for s, a in zip(*np.nonzero(np.any(p < 0, axis=2)), strict=True):
        report.issues.append(f"row ({s},{a}) has negative entries")
    sums = p.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > _TOL), strict=True):
        report.issues.append(f"row ({s},{a}) sums to {sums[s, a]:.6g}")
    if np.any(mdp.initial_dist < 0) or abs(mdp.initial_dist.sum() - 1.0) > _TOL:
        report.issues.append(f"initial_dist sums to {mdp.initial_dist.sum():.6g}")
    for s in sorted(mdp.terminal):
        for a in range(mdp.n_actions):
            if abs(p[s, a, s] - 1.0) > _TOL:
                report.issues.append(f"terminal state {s} does not self-loop under action {a}")
            if r[s, a] != 0.0:
                report.issues.append(f"terminal state {s} has non-zero reward {r[s, a]:.6g} under action {a}")
    if not np.all(np.isfinite(r)):
        report.issues.append("rewards must be finite")
    elif np.max(np.abs(r), initial=0.0) > mdp.r_max + _TOL:
        report.issues.append(f"|r| exceeds declared r_max={mdp.r_max:.6g}")

    adjacency = np.any(p > 0, axis=1)
    report.irreducible = _strongly_connected(adjacency)
    live = ~mdp.terminal_mask
    report.transient_connected = bool(live.any()) and _strongly_connected(adjacency[np.ix_(live, live)])
    return report


def _strongly_connected(adjacency: np.ndarray) -> bool:
    if adjacency.shape[0] == 0:
        return False
    n_components, _ = connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    return n_components == 1


def transition_matrix(mdp: FiniteMdp, policy: PolicyTable | np.ndarray) -> np.ndarray:
    """State-to-state kernel ``M[s, s'] = Σ_a π(a|s) p[s, a, s']``."""
    probs = as_probs(policy)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionMismatchError(f"policy shape {probs.shape} != ({mdp.n_states}, {mdp.n_actions})")
    return np.einsum("sa,sat->st", probs, mdp.transition)


def propagate(
    mdp: FiniteMdp, dist: StateDistribution | np.ndarray, policy: PolicyTable | np.ndarray
) -> StateDistribution:
    """One step of the state law: ``d'[s'] = Σ_s Σ_a d[s] π(a|s) p[s, a, s']``."""
    d = dist.probs if isinstance(dist, StateDistribution) else np.asarray(dist, dtype=float)
    if d.shape != (mdp.n_states,):
        raise DimensionMismatchError(f"distribution shape {d.shape} != ({mdp.n_states},)")
    return StateDistribution(d @ transition_matrix(mdp, policy))


def policy_stack(mdp: FiniteMdp, policy: ExtendedPolicy | np.ndarray) -> np.ndarray:
    """Return ``(n, S, A)`` tables for an extended policy or a table stack."""
    if hasattr(policy, "as_tables"):
        return policy.as_tables(mdp)
    tables = np.asarray(policy, dtype=float)
    if tables.ndim != 3 or tables.shape[1:] != (mdp.n_states, mdp.n_actions):
        raise DimensionMismatchError(f"policy stack shape {tables.shape} incompatible with MDP")
    return tables


def state_marginals(mdp: FiniteMdp, policy: ExtendedPolicy | np.ndarray) -> np.ndarray:
    """Exact laws of ``S_0 … S_n`` under an extended policy, shape ``(n + 1, S)``.

    Row ``k`` is ``m^{(n-k)}``, the law of the state at which ``π^{(n-k)}`` acts.
    """
    tables = policy_stack(mdp, policy)
    n = tables.shape[0]
    laws = np.empty((n + 1, mdp.n_states))
    laws[0] = mdp.initial_dist
    for k in range(n):
        laws[k + 1] = laws[k] @ transition_matrix(mdp, tables[n - k - 1])
    return laws


def _sample_reward(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> float:
    if mdp.reward_noise == 0.0 or s in mdp.terminal:
        return float(mdp.reward[s, a])
    return float(mdp.reward[s, a] + rng.uniform(-mdp.reward_noise, mdp.reward_noise))


def sample_trajectory(mdp: FiniteMdp, policy: ExtendedPolicy | np.ndarray, rng: np.random.Generator) -> Trajectory:
    """Sample one ``n``-step trajectory; ``a_k ~ π^{(n-k)}(·|s_k)``."""
    tables = policy_stack(mdp, policy)
    n = tables.shape[0]
    if n < 1:
        raise DimensionMismatchError("policy horizon must be at least 1")
    s = int(rng.choice(mdp.n_states, p=mdp.initial_dist))
    states, actions, rewards = [s], [], []
    live = n
    for k in range(n):
        if s in mdp.terminal and live == n:
            live = k
        a = int(rng.choice(mdp.n_actions, p=tables[n - k - 1, s]))
        rewards.append(_sample_reward(mdp, s, a, rng))
        actions.append(a)
        s = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
        states.append(s)
    return Trajectory(states, actions, rewards, live)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Vectorised trajectories: ``states (B, n+1)``, ``actions (B, n)``, ``rewards (B, n)``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return self.actions.shape[0]

    def trajectory(self, b: int) -> Trajectory:
        return Trajectory(
            [int(s) for s in self.states[b]], [int(a) for a in self.actions[b]], [float(r) for r in self.rewards[b]]
        )

    def __iter__(self) -> Iterator[Trajectory]:
        return (self.trajectory(b) for b in range(len(self)))


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of *probs* by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((u >= cdf).sum(axis=1), probs.shape[1] - 1)


def sample_batch(
    mdp: FiniteMdp, policy: ExtendedPolicy | np.ndarray, rng: np.random.Generator, count: int
) -> TrajectoryBatch:
    """Sample *count* independent trajectories at once (Monte-Carlo checks)."""
    tables = policy_stack(mdp, policy)
    n = tables.shape[0]
    states = np.empty((count, n + 1), dtype=np.int64)
    actions = np.empty((count, n), dtype=np.int64)
    rewards = np.empty((count, n))
    states[:, 0] = _categorical(np.broadcast_to(mdp.initial_dist, (count, mdp.n_states)), rng)
    terminal = mdp.terminal_mask
    for k in range(n):
        s = states[:, k]
        a = _categorical(tables[n - k - 1][s], rng)
        r = mdp.reward[s, a].copy()
        if mdp.reward_noise > 0:
            noise = rng.uniform(-mdp.reward_noise, mdp.reward_noise, size=count)
            r += np.where(terminal[s], 0.0, noise)
        actions[:, k] = a
        rewards[:, k] = r
        states[:, k + 1] = _categorical(mdp.transition[s, a], rng)
    return TrajectoryBatch(states, actions, rewards)


# ── Factories ───────────────────────────────────────────────────────────


def random_mdp(
    n_states: int,
    n_actions: int,
    rng: np.random.Generator,
    *,
    reward_scale: float = 1.0,
    concentration: float = 1.0,
    terminal: Iterable[int] = (),
) -> FiniteMdp:
    """Random MDP with Dirichlet transition rows and uniform rewards in ``[-scale, scale]``.

    ``ν_0`` is uniform, matching the theory setting.
    """
    transition = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    reward = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions))
    terminal = frozenset(terminal)
    for s in terminal:
        transition[s] = 0.0
        transition[s, :, s] = 1.0
        reward[s] = 0.0
    return FiniteMdp(
        transition,
        reward,
        np.full(n_states, 1.0 / n_states),
        terminal,
        r_max=reward_scale,
        name=f"random-{n_states}x{n_actions}",
    )
