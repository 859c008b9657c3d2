"""Tests for app.training.trainer."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from app.config import get_settings
from app.core.errors import ConfigError, DivergenceError, HorizonMismatchError
from app.dp.soft_dp import objective, solve_optimal
from app.envs.bandit import BanditEnv, bandit_mdp
from app.envs.cartpole import CartPoleEnv
from app.policies.features import TabularFeatures
from app.policies.softmax import ExtendedPolicy
from app.training.trainer import TrainConfig, train


def _config(**overrides) -> TrainConfig:
    values = {"horizon": 1, "episodes": 50, "eta0": 0.5, "tau0": 0.5}
    values.update(overrides)
    return TrainConfig(**values)


class TestTrainConfig:
    def test_constant_schedules(self):
        config = _config()
        assert config.eta_decay == 1.0
        assert config.tau_decay == 1.0

    def test_decay_factors(self):
        config = _config(episodes=10, tau_final=0.05, eta_final=0.005)
        assert config.tau0 * config.tau_decay**10 == pytest.approx(0.05)
        assert config.eta0 * config.eta_decay**10 == pytest.approx(0.005)

    def test_schedules_follow_decay(self):
        config = _config(episodes=10, tau_final=0.05, decay="constant")
        assert config.tau_schedule.value(7) == pytest.approx(0.5)
        assert _config(episodes=10, tau_final=0.05).tau_schedule.value(10) == pytest.approx(0.05)

    def test_discount_needs_ideal(self):
        with pytest.raises(ValidationError):
            _config(gamma=0.9)
        assert _config(gamma=0.9, variant="ideal").gamma == 0.9

    def test_frozen(self):
        with pytest.raises(ValidationError):
            _config().horizon = 3  # type: ignore[misc]

    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            _config(learning_rate=0.1)


class TestTrain:
    def test_ideal_bandit_reaches_optimum(self):
        mdp = bandit_mdp([1.0, 0.0])
        policy, log = train(mdp, _config(episodes=2000, variant="ideal"))
        optimum = solve_optimal(mdp, 1, 0.5).pi_star
        assert_allclose(policy.as_tables(mdp), optimum, atol=1e-6)
        objectives = log.to_frame()["J_estimate"].to_numpy()
        assert np.all(np.diff(objectives) >= -1e-12)

    def test_sampled_bandit_prefers_best_arm(self):
        env = BanditEnv([1.0, 0.0], noise=0.1)
        policy, _ = train(env, _config(episodes=3000, eta0=0.01, seed=3))
        probs = policy.as_tables(env.as_mdp())[0, 0]
        assert probs[0] > 0.6

    def test_temperature_decays_to_final(self, make_mdp):
        mdp = make_mdp()
        policy, log = train(mdp, _config(horizon=2, episodes=20, tau0=1.0, tau_final=0.1, seed=0))
        assert policy.tau == pytest.approx(0.1)
        assert log.rows[0]["tau"] == pytest.approx(1.0)
        assert log.final_tau < 1.0

    def test_same_seed_same_parameters(self, make_mdp):
        mdp = make_mdp()
        config = _config(horizon=3, episodes=30, eta0=0.1, seed=11)
        a, _ = train(mdp, config)
        b, _ = train(mdp, config)
        for x, y in zip(a.thetas, b.thetas, strict=True):
            assert_allclose(x, y)

    def test_log_every(self, make_mdp):
        _, log = train(make_mdp(), _config(horizon=2, episodes=25, log_every=10, seed=0))
        assert [row["episode"] for row in log.rows] == [0, 10, 20, 24]
        assert log.episodes == 25
        assert "update_norm_2" in log.rows[0]

    def test_exact_objective_logged(self, make_mdp):
        _, log = train(make_mdp(), _config(horizon=2, episodes=5, exact_every=1, seed=0))
        assert np.all(np.isfinite(log.to_frame()["J_estimate"]))

    def test_exact_objective_uses_discount(self):
        mdp = bandit_mdp([1.0, 0.5])
        policy, log = train(mdp, _config(horizon=3, episodes=4, variant="ideal", gamma=0.5, exact_every=1))
        last = log.rows[-1]["J_estimate"]
        assert last == pytest.approx(objective(mdp, policy, gamma=0.5), abs=1e-12)
        assert last != pytest.approx(objective(mdp, policy, gamma=1.0), abs=1e-6)

    def test_logged_schedule_values(self, make_mdp):
        config = _config(horizon=2, episodes=12, tau0=1.0, tau_final=0.2, eta_final=0.05, seed=0)
        _, log = train(make_mdp(), config)
        for row in log.rows:
            assert row["eta"] == pytest.approx(config.eta_schedule.value(int(row["episode"])))
            assert row["tau"] == pytest.approx(config.tau_schedule.value(int(row["episode"])))

    def test_batches_and_baseline(self, make_mdp):
        policy, log = train(
            make_mdp(),
            _config(horizon=2, episodes=5, batch_size=4, value_baseline="running_mean", variant="multi", seed=0),
        )
        assert log.episodes == 5
        assert policy.horizon == 2

    def test_divergence_raises_with_log(self, make_mdp, monkeypatch):
        monkeypatch.setenv("MPG_DIVERGENCE_THRESHOLD", "1e-6")
        get_settings.cache_clear()
        with pytest.raises(DivergenceError) as info:
            train(make_mdp(), _config(horizon=2, episodes=10, eta0=1.0, seed=0))
        assert info.value.partial_log.diverged
        assert info.value.partial_log.episodes == 1

    def test_cancel_check_stops_early(self, make_mdp):
        calls = iter([False, False, True])
        _, log = train(make_mdp(), _config(horizon=2, episodes=10, seed=0), cancel_check=lambda: next(calls))
        assert log.cancelled
        assert log.episodes == 2

    def test_ideal_needs_finite_target(self):
        from app.neural.mlp import HorizonEncoding, InputEncoder, NeuralPreference

        env = CartPoleEnv()
        model = NeuralPreference(InputEncoder(2, 4, HorizonEncoding("none"), env.encode), (8,), "tanh")
        with pytest.raises(ConfigError):
            train(env, _config(variant="ideal"), model=model)

    def test_non_finite_target_needs_model(self):
        with pytest.raises(ConfigError):
            train(CartPoleEnv(), _config())

    def test_continues_given_policy(self, make_mdp):
        mdp = make_mdp()
        start = ExtendedPolicy.create(TabularFeatures(3, 2), horizon=2, tau=0.9)
        policy, _ = train(mdp, _config(horizon=2, episodes=3, seed=0), policy=start)
        assert policy is start
        assert policy.tau == 0.5
        with pytest.raises(HorizonMismatchError):
            train(mdp, _config(horizon=3), policy=start)

    def test_writes_csv(self, make_mdp, tmp_path):
        _, log = train(make_mdp(), _config(horizon=2, episodes=3, seed=0))
        path = log.to_csv(tmp_path / "train" / "run.csv")
        assert path.read_text().splitlines()[0].startswith("episode,J_estimate,cum_reward,eta,tau")
