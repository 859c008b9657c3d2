"""Per-agent records, per-cell aggregates, CSV files and markdown tables."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from app.core.errors import ConfigError

RESULTS_FILE = "results.csv"
AGENTS_FILE = "agents.csv"

# Runs whose evaluation success rate is below this count as failed to train.
MIN_SUCCESS_RATE = 0.05


@dataclass(frozen=True)
class AgentRecord:
    """Raw outcome of one trained agent."""

    cell: int
    agent: int
    diverged: bool
    episodes: int
    final_tau: float
    games: int
    successes: int
    total_steps: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.games if self.games else 0.0

    @property
    def failed(self) -> bool:
        return self.diverged or self.success_rate < MIN_SUCCESS_RATE


@dataclass(frozen=True)
class ResultRow:
    """Aggregate of one parameter cell over its non-failed agents.

    ``success_pct`` and ``avg_steps`` are ``nan`` when every agent failed.
    """

    cell: int
    label: str
    tau_final: float
    tau0: float
    eta0: float
    horizon: int
    agents: int
    success_pct: float
    avg_steps: float
    failed_to_train: int
    records: list[AgentRecord] = field(default_factory=list, compare=False)


def aggregate(cell: int, label: str, params: dict[str, float], records: list[AgentRecord]) -> ResultRow:
    """Pool the evaluation games of every agent that trained successfully."""
    kept = [r for r in records if not r.failed]
    games = sum(r.games for r in kept)
    success_pct = 100.0 * sum(r.successes for r in kept) / games if games else math.nan
    avg_steps = sum(r.total_steps for r in kept) / games if games else math.nan
    return ResultRow(
        cell=cell,
        label=label,
        tau_final=params["tau_final"],
        tau0=params["tau0"],
        eta0=params["eta0"],
        horizon=int(params["horizon"]),
        agents=len(records),
        success_pct=success_pct,
        avg_steps=avg_steps,
        failed_to_train=len(records) - len(kept),
        records=records,
    )


def results_frame(rows: list[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([{k: v for k, v in asdict(row).items() if k != "records"} for row in rows])


def agents_frame(rows: list[ResultRow]) -> pd.DataFrame:
    data = []
    for row in rows:
        for record in row.records:
            data.append({**asdict(record), "success_rate": record.success_rate, "failed": record.failed})
    return pd.DataFrame(data)


def write_results(rows: list[ResultRow], out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``results.csv`` and ``agents.csv``; byte-identical for identical rows."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = out_dir / RESULTS_FILE
    agents = out_dir / AGENTS_FILE
    results_frame(rows).to_csv(results, index=False, float_format="%.10g")
    agents_frame(rows).to_csv(agents, index=False, float_format="%.10g")
    return results, agents


def read_results(out_dir: str | Path) -> pd.DataFrame:
    path = Path(out_dir) / RESULTS_FILE
    if not path.exists():
        raise ConfigError(f"no {RESULTS_FILE} in {out_dir}")
    return pd.read_csv(path)


def recompute_from_agents(agents: pd.DataFrame) -> pd.DataFrame:
    """Rebuild success % and average steps per cell from ``agents.csv`` alone."""
    kept = agents[~agents["failed"].astype(bool)]
    sums = kept.groupby("cell")[["games", "successes", "total_steps"]].sum()
    out = pd.DataFrame(index=sorted(agents["cell"].unique()))
    out["success_pct"] = 100.0 * sums["successes"] / sums["games"]
    out["avg_steps"] = sums["total_steps"] / sums["games"]
    out["failed_to_train"] = agents.groupby("cell")["failed"].sum().astype(int)
    return out


def _fmt(value: float, digits: int = 2) -> str:
    return "--" if value is None or (isinstance(value, float) and math.isnan(value)) else f"{value:.{digits}f}"


def render_markdown(results: pd.DataFrame, title: str | None = None) -> str:
    """Markdown table with one row per cell: grid parameters then outcomes."""
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| τ_T | τ_0 | η_0 | n | Success % | Average steps | Failed to train |")
    lines.append("|---|---|---|---|---|---|---|")
    for row in results.itertuples(index=False):
        lines.append(
            f"| {row.tau_final:g} | {row.tau0:g} | {row.eta0:g} | {int(row.horizon)} "
            f"| {_fmt(row.success_pct)} | {_fmt(row.avg_steps)} | {int(row.failed_to_train)} |"
        )
    return "\n".join(lines) + "\n"
