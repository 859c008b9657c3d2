"""Tests for the mpg command line."""

from __future__ import annotations

import json
import logging

import pytest

from app import cli
from app.core.errors import RunCancelledError
from app.core.serialization import read_json, write_json
from app.experiments.verify import CheckResult, VerifyReport


@pytest.fixture(autouse=True)
def restore_root_handlers():
    root = logging.getLogger()
    saved, level = root.handlers.copy(), root.level
    yield
    for h in root.handlers:
        if h not in saved:
            h.close()
    root.handlers = saved
    root.setLevel(level)


@pytest.fixture
def trained(tmp_path):
    """A tiny bandit experiment trained through the CLI."""
    config = write_json(
        tmp_path / "bandit.json",
        {
            "name": "cli-bandit",
            "env": {"id": "bandit", "options": {"rewards": [1.0, 0.0]}},
            "grid": {"tau_final": [0.2], "tau0": [0.5], "eta0": [0.1], "horizon": [2]},
            "episodes": 30,
            "agents": 1,
            "eval_games": 5,
        },
    )
    out = tmp_path / "out"
    assert cli.main(["train", str(config), "--output", str(out), "--workers", "1"]) == 0
    return out


def test_train_prints_table(capsys, trained):
    assert "| τ_T | τ_0 | η_0 | n |" in capsys.readouterr().out
    assert (trained / "results.csv").exists()


def test_train_missing_config(tmp_path):
    assert cli.main(["train", str(tmp_path / "nope.toml")]) == 2


def test_evaluate(trained, capsys):
    capsys.readouterr()
    assert cli.main(["evaluate", str(trained / "checkpoints" / "c000-a00.json"), "bandit", "--games", "7"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["games"] == 7
    assert summary["success_pct"] == 100.0
    assert summary["tau"] == pytest.approx(0.2)


def test_evaluate_rejects_zero_games(trained):
    assert cli.main(["evaluate", str(trained / "checkpoints" / "c000-a00.json"), "bandit", "--games", "0"]) == 2


def test_certify_finite_env(trained, tmp_path, capsys):
    capsys.readouterr()
    report = tmp_path / "cert.json"
    code = cli.main(
        ["certify", str(trained / "checkpoints" / "c000-a00.json"), "bandit", "--steps", "2", "--output", str(report)]
    )
    assert code == 0
    doc = read_json(report)
    assert [r["m"] for r in doc["certificate"]] == [2]
    assert doc["certificate"][0]["kernel_full_rank"] is True
    assert doc["certificate"][0]["lambda_min_retained"] > 0
    assert "ntk" not in doc
    assert json.loads(capsys.readouterr().out) == doc


def test_certify_needs_finite_env_or_network(trained):
    assert cli.main(["certify", str(trained / "checkpoints" / "c000-a00.json"), "cartpole"]) == 2


def test_certify_bad_steps(trained):
    with pytest.raises(SystemExit):
        cli.main(["certify", str(trained / "checkpoints" / "c000-a00.json"), "bandit", "--steps", "one"])


def test_report_uses_experiment_name(trained, capsys):
    capsys.readouterr()
    assert cli.main(["report", str(trained)]) == 0
    assert capsys.readouterr().out.startswith("### cli-bandit")


def test_verify_exit_codes(monkeypatch, tmp_path, capsys):
    calls = {}

    def fake_suite(level, *, seed, only):
        calls.update(level=level, seed=seed, only=only)
        return VerifyReport(level, [CheckResult("dp-identities", only is None, "", 0.0)])

    monkeypatch.setattr(cli, "verify_suite", fake_suite)
    assert cli.main(["verify", "--seed", "4", "--output", str(tmp_path / "v.json")]) == 0
    assert calls == {"level": "fast", "seed": 4, "only": None}
    assert read_json(tmp_path / "v.json")["passed"] is True
    assert cli.main(["verify", "--level", "full", "--only", "dp-identities, horizon-limit"]) == 1
    assert calls["only"] == ["dp-identities", "horizon-limit"]
    assert "### Verification (full)" in capsys.readouterr().out


def test_cancellation_exit_code(monkeypatch):
    def cancelled(args):
        raise RunCancelledError("cancelled after 1 of 4 jobs")

    monkeypatch.setitem(cli.COMMANDS, "report", cancelled)
    assert cli.main(["report", "anywhere"]) == 130


def test_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["fly"])
