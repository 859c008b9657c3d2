"""Experiment files: a training grid, an environment and evaluation settings.

Usage:
    spec = load_experiment("configs/frozenlake_4x4.toml")
    for cell in spec.cells():
        print(cell.label, cell.config.horizon)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.errors import ConfigError
from app.core.serialization import read_document
from app.training.trainer import TrainConfig

# Horizons above this use one network shared across steps by default.
SHARED_HORIZON = 10


class EnvSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    options: dict[str, Any] = Field(default_factory=dict)


class NetworkSpec(BaseModel):
    """Preference model of every agent."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["tabular", "neural"] = "tabular"
    hidden: list[int] = Field(default_factory=lambda: [64, 64])
    activation: Literal["tanh", "relu", "identity"] = "tanh"
    horizon_encoding: Literal["auto", "separate", "raw", "inverse"] = "auto"

    def encoding_for(self, horizon: int) -> str:
        """``auto`` resolves to ``separate`` up to :data:`SHARED_HORIZON` steps, ``inverse`` above."""
        if self.kind == "tabular":
            return "separate"
        if self.horizon_encoding == "auto":
            return "separate" if horizon <= SHARED_HORIZON else "inverse"
        return self.horizon_encoding


class GridSpec(BaseModel):
    """Lists whose Cartesian product forms the parameter cells."""

    model_config = ConfigDict(extra="forbid")

    tau0: list[float] = Field(min_length=1)
    eta0: list[float] = Field(min_length=1)
    horizon: list[int] = Field(min_length=1)
    tau_final: list[float] = Field(min_length=1)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    env: EnvSpec
    grid: GridSpec
    episodes: int = Field(ge=1)
    eta_final: float | None = Field(default=None, gt=0)
    variant: Literal["sampled", "ideal", "multi"] = "sampled"
    batch_size: int = Field(default=1, ge=1)
    truncate_absorbed: bool = True
    value_baseline: Literal["zero", "running_mean"] = "zero"
    network: NetworkSpec = Field(default_factory=NetworkSpec)
    agents: int = Field(ge=1)
    eval_games: int = Field(default=100, ge=1)
    seed_root: int = 0
    log_every: int = Field(default=100, ge=1)
    output: str | None = None

    def cells(self) -> list[Cell]:
        """Grid cells in a fixed order (τ_T, τ_0, η_0, n)."""
        cells = []
        product = itertools.product(self.grid.tau_final, self.grid.tau0, self.grid.eta0, self.grid.horizon)
        for index, (tau_final, tau0, eta0, horizon) in enumerate(product):
            encoding = self.network.encoding_for(horizon)
            config = TrainConfig(
                horizon=horizon,
                episodes=self.episodes,
                eta0=eta0,
                eta_final=self.eta_final,
                tau0=tau0,
                tau_final=tau_final,
                variant=self.variant,
                batch_size=self.batch_size,
                truncate_absorbed=self.truncate_absorbed,
                value_baseline=self.value_baseline,
                shared=encoding in ("raw", "inverse"),
                log_every=self.log_every,
            )
            params = {"tau_final": tau_final, "tau0": tau0, "eta0": eta0, "horizon": horizon}
            cells.append(Cell(index, params, config, encoding))
        return cells


@dataclass(frozen=True)
class Cell:
    index: int
    params: dict[str, float]
    config: TrainConfig
    horizon_encoding: str

    @property
    def cell_id(self) -> str:
        return f"c{self.index:03d}"

    @property
    def label(self) -> str:
        p = self.params
        return f"tau_T={p['tau_final']:g}, tau0={p['tau0']:g}, eta0={p['eta0']:g}, n={int(p['horizon'])}"


def parse_experiment(document: dict[str, Any]) -> ExperimentSpec:
    """Validate a raw document, turning pydantic errors into :class:`ConfigError`."""
    try:
        return ExperimentSpec.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid experiment field '{where}': {first['msg']}") from exc


def load_experiment(path: str | Path) -> ExperimentSpec:
    """Read a TOML or JSON experiment file."""
    return parse_experiment(read_document(path))
