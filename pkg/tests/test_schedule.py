"""Tests for app.training.schedule."""

from __future__ import annotations

import pytest

from app.training.schedule import ExponentialSchedule, decay_schedule


def test_factor_reaches_final_value():
    d = decay_schedule(1e-3, 1e-5, 100)
    assert 1e-3 * d**100 == pytest.approx(1e-5)


def test_constant_when_endpoints_equal():
    assert decay_schedule(0.5, 0.5, 10) == pytest.approx(1.0)


@pytest.mark.parametrize("x0, x_final, episodes", [(0.0, 1.0, 10), (1.0, -1.0, 10), (1.0, 0.1, 0)])
def test_rejects_bad_arguments(x0, x_final, episodes):
    with pytest.raises(ValueError):
        decay_schedule(x0, x_final, episodes)


class TestExponentialSchedule:
    def test_values(self):
        schedule = ExponentialSchedule(0.6, 0.03, 1000)
        assert schedule.value(0) == pytest.approx(0.6)
        assert schedule.value(500) == pytest.approx((0.6 * 0.03) ** 0.5)
        assert schedule.value(1000) == pytest.approx(0.03)
        assert schedule.value(5000) == pytest.approx(0.03)

    def test_monotone(self):
        schedule = ExponentialSchedule(1.0, 0.1, 20)
        values = [schedule.value(t) for t in range(21)]
        assert all(a > b for a, b in zip(values, values[1:], strict=False))


class TestDecayFactor:
    def test_frozenlake_temperature_factor(self):
        assert decay_schedule(0.4, 0.03, 1000) == pytest.approx(0.997414, abs=5e-7)

    def test_random_endpoints_round_trip(self, rng):
        for x0, x_final, episodes in zip(
            rng.uniform(1e-6, 2.0, 20), rng.uniform(1e-6, 2.0, 20), rng.integers(1, 5000, 20), strict=True
        ):
            d = decay_schedule(x0, x_final, int(episodes))
            assert x0 * d ** int(episodes) == pytest.approx(x_final, rel=1e-9)
