"""Tests for app.core.executor: shared process pool and ordered map."""

from __future__ import annotations

import concurrent.futures

import pytest

from app.core.errors import RunCancelledError
from app.core.executor import get_executor, map_ordered, shutdown_executor


def _square(x: int) -> int:
    return x * x


class TestGetExecutor:
    """get_executor() returns a reusable ProcessPoolExecutor."""

    def teardown_method(self):
        shutdown_executor(wait=True)

    def test_returns_executor(self):
        assert isinstance(get_executor(2), concurrent.futures.ProcessPoolExecutor)

    def test_same_instance(self):
        assert get_executor(2) is get_executor(2)

    def test_resized_on_different_worker_count(self):
        small = get_executor(2)
        large = get_executor(3)
        assert large is not small
        assert large._max_workers == 3
        assert get_executor(3) is large

    def test_default_size_from_settings(self, monkeypatch):
        from app.config import get_settings

        monkeypatch.setenv("MPG_MAX_WORKERS", "2")
        get_settings.cache_clear()
        assert get_executor()._max_workers == 2

    def test_recreates_after_shutdown(self):
        old = get_executor(2)
        shutdown_executor(wait=True)
        assert get_executor(2) is not old


class TestMapOrdered:
    """map_ordered keeps submission order serially and in parallel."""

    def teardown_method(self):
        shutdown_executor(wait=True)

    def test_serial(self):
        assert map_ordered(_square, range(5), max_workers=1) == [0, 1, 4, 9, 16]

    def test_parallel_order(self):
        assert map_ordered(_square, range(8), max_workers=2) == [x * x for x in range(8)]

    def test_empty(self):
        assert map_ordered(_square, [], max_workers=4) == []

    def test_cancel_check_stops_serial_run(self):
        calls = []

        def fn(x):
            calls.append(x)
            return x

        with pytest.raises(RunCancelledError, match="1 of 3"):
            map_ordered(fn, [1, 2, 3], max_workers=1, cancel_check=lambda: True)
        assert calls == [1]
