"""Shared fixtures for the MPG test-suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on path
ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="Run long training / Monte-Carlo tests")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--run-slow", default=False):
        skip = pytest.mark.skip(reason="Need --run-slow to run")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip)


# ── Environment isolation ───────────────────────────────────────────────


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """Isolate every test from user settings and filesystem side effects."""
    monkeypatch.setenv("MPG_LOG_FILE", str(tmp_path / "mpg.log"))
    monkeypatch.setenv("MPG_RESULTS_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("MPG_MAX_WORKERS", "1")

    # Clear the cached settings singleton so each test picks up monkeypatched env
    from app.config import get_settings
    from app.core import diagnostics

    get_settings.cache_clear()
    diagnostics.reset()
    yield
    get_settings.cache_clear()


# ── Reusable fixtures ──────────────────────────────────────────────────


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_mdp(rng):
    """Factory fixture for random finite MDPs."""
    from app.mdp.finite import random_mdp

    def _factory(n_states: int = 3, n_actions: int = 2, **kwargs):
        return random_mdp(n_states, n_actions, rng, **kwargs)

    return _factory


@pytest.fixture
def make_policy(rng):
    """Factory fixture for tabular extended policies with random parameters."""
    from app.policies.features import TabularFeatures
    from app.policies.softmax import ExtendedPolicy

    def _factory(mdp, horizon: int = 3, tau: float = 0.5, scale: float = 1.0, baseline=None):
        model = TabularFeatures(mdp.n_states, mdp.n_actions)
        thetas = [scale * rng.standard_normal(model.n_params) for _ in range(horizon)]
        return ExtendedPolicy(model, thetas, tau, horizon, baseline)

    return _factory
