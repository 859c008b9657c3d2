"""Non-slippery FrozenLake grids with shaped rewards.

Cells: ``S`` start, ``F`` frozen, ``H`` hole, ``G`` goal.  Holes and the goal
are absorbing.  Actions follow the usual ordering ``0 left, 1 down, 2 right,
3 up``; bumping into the border leaves the agent in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar, Literal

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from app.core.errors import EnvStepError
from app.envs.base import FiniteMdpEnv
from app.mdp.finite import FiniteMdp, Trajectory

LAYOUT_4X4 = ("SFFF", "FHFH", "FFFH", "HFFG")
LAYOUT_8X8 = (
    "SFFFFFFF",
    "FFFFFFFF",
    "FFFHFFFF",
    "FFFFFHFF",
    "FFFHFFFF",
    "FHHFFFHF",
    "FHFFHFHF",
    "FFFHFFFG",
)

LEFT, DOWN, RIGHT, UP = range(4)
_MOVES = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}

StateEncoding = Literal["coords", "onehot"]


@dataclass(frozen=True)
class FrozenLakeSpec:
    """Grid layout plus reward shaping."""

    layout: tuple[str, ...] = LAYOUT_4X4
    lose: float = -1.0
    wall: float = -0.05
    move: float = 0.05
    goal: float = 10.0

    def __post_init__(self) -> None:
        layout = tuple(self.layout)
        object.__setattr__(self, "layout", layout)
        k = len(layout)
        if k == 0 or any(len(row) != k for row in layout):
            raise EnvStepError(f"FrozenLake layout must be a square grid, got {layout}")
        cells = "".join(layout)
        if set(cells) - set("SFHG"):
            raise EnvStepError(f"unknown FrozenLake cell(s): {sorted(set(cells) - set('SFHG'))}")
        if cells.count("S") != 1 or cells.count("G") != 1:
            raise EnvStepError("FrozenLake layout needs exactly one S and one G")

    @property
    def size(self) -> int:
        return len(self.layout)

    @property
    def cells(self) -> str:
        return "".join(self.layout)

    @property
    def start(self) -> int:
        return self.cells.index("S")

    @property
    def goal_state(self) -> int:
        return self.cells.index("G")

    @property
    def holes(self) -> frozenset[int]:
        return frozenset(i for i, c in enumerate(self.cells) if c == "H")

    @classmethod
    def standard(cls, size: int) -> FrozenLakeSpec:
        """The standard 4×4 or 8×8 lake with its default shaping."""
        if size == 4:
            return cls(LAYOUT_4X4)
        if size == 8:
            return cls(LAYOUT_8X8, wall=-0.1, move=0.01)
        raise EnvStepError(f"no standard FrozenLake of size {size}")


def _target(spec: FrozenLakeSpec, state: int, action: int) -> int | None:
    row, col = divmod(state, spec.size)
    dr, dc = _MOVES[action]
    row, col = row + dr, col + dc
    if not (0 <= row < spec.size and 0 <= col < spec.size):
        return None
    return row * spec.size + col


def frozenlake_as_mdp(spec: FrozenLakeSpec, *, uniform_start: bool = False) -> FiniteMdp:
    """Exact finite MDP of the lake.

    ``uniform_start`` replaces the start cell by a uniform law over
    non-terminal cells.
    """
    n = spec.size * spec.size
    terminal = spec.holes | {spec.goal_state}
    transition = np.zeros((n, 4, n))
    reward = np.zeros((n, 4))
    for s in range(n):
        for a in range(4):
            if s in terminal:
                transition[s, a, s] = 1.0
                continue
            nxt = _target(spec, s, a)
            if nxt is None:
                transition[s, a, s] = 1.0
                reward[s, a] = spec.wall
            else:
                transition[s, a, nxt] = 1.0
                cell = spec.cells[nxt]
                reward[s, a] = spec.lose if cell == "H" else spec.goal if cell == "G" else spec.move
    if uniform_start:
        live = np.array([s not in terminal for s in range(n)], dtype=float)
        initial = live / live.sum()
    else:
        initial = np.zeros(n)
        initial[spec.start] = 1.0
    r_max = max(abs(spec.lose), abs(spec.wall), abs(spec.move), abs(spec.goal))
    return FiniteMdp(transition, reward, initial, terminal, r_max=r_max, name=f"frozenlake-{spec.size}x{spec.size}")


def shortest_path_length(spec: FrozenLakeSpec) -> int:
    """Fewest moves from ``S`` to ``G`` avoiding holes."""
    n = spec.size * spec.size
    rows, cols = [], []
    for s in range(n):
        if s in spec.holes or s == spec.goal_state:
            continue
        for a in range(4):
            nxt = _target(spec, s, a)
            if nxt is not None and nxt != s:
                rows.append(s)
                cols.append(nxt)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    dist = shortest_path(graph, directed=True, unweighted=True, indices=spec.start)
    length = dist[spec.goal_state]
    if not np.isfinite(length):
        raise EnvStepError("goal is unreachable from the start cell")
    return int(length)


class FrozenLakeEnv(FiniteMdpEnv):
    """FrozenLake sampled through its exact MDP."""

    env_id: ClassVar[str] = "frozenlake"

    def __init__(
        self, spec: FrozenLakeSpec | None = None, *, encoding: StateEncoding = "coords", uniform_start: bool = False
    ):
        self.spec = spec or FrozenLakeSpec.standard(4)
        super().__init__(frozenlake_as_mdp(self.spec, uniform_start=uniform_start))
        if encoding not in ("coords", "onehot"):
            raise EnvStepError(f"unknown FrozenLake state encoding '{encoding}'")
        self.encoding = encoding
        self.state_dim = 2 if encoding == "coords" else self.mdp.n_states

    def encode(self, state: Any) -> np.ndarray:
        if self.encoding == "onehot":
            return super().encode(state)
        row, col = divmod(int(state), self.spec.size)
        return np.array([row, col], dtype=float) / (self.spec.size - 1)

    def success(self, trajectory: Trajectory) -> bool:
        return self.spec.goal_state in trajectory.states