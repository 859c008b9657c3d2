"""Shared process-pool executor for embarrassingly parallel sweeps.

Provides a bounded ``ProcessPoolExecutor`` reused across a CLI invocation
and ``map_ordered`` which returns results in submission order so that
sweeps stay byte-deterministic regardless of completion order.
"""

from __future__ import annotations

import concurrent.futures
from collections.abc import Callable, Iterable
from typing import Any, TypeVar

from app.config import get_settings
from app.core.cancellation import ignore_sigint
from app.core.errors import RunCancelledError

T = TypeVar("T")

_executor: concurrent.futures.ProcessPoolExecutor | None = None
_executor_workers = 0


def get_executor(max_workers: int | None = None) -> concurrent.futures.ProcessPoolExecutor:
    """Return the shared executor, creating it lazily.

    A request for a different worker count shuts the current pool down and
    starts a new one of that size.
    """
    global _executor, _executor_workers
    workers = max_workers or get_settings().max_workers
    if _executor is not None and workers != _executor_workers:
        shutdown_executor(wait=True)
    if _executor is None:
        _executor = concurrent.futures.ProcessPoolExecutor(max_workers=workers, initializer=ignore_sigint)
        _executor_workers = workers
    return _executor


def map_ordered(
    fn: Callable[[Any], T],
    items: Iterable[Any],
    *,
    max_workers: int | None = None,
    cancel_check: Callable[[], bool] | None = None,
) -> list[T]:
    """Apply *fn* to every item, in parallel when more than one worker is configured.

    ``fn`` must be a picklable top-level function.  Results come back in the
    order of *items*.  When *cancel_check* turns true, pending items are
    dropped and :class:`RunCancelledError` is raised.  Usage::

        rows = map_ordered(train_and_evaluate, jobs)
    """
    items = list(items)
    workers = max_workers or get_settings().max_workers
    results: list[T] = []
    if workers <= 1 or len(items) <= 1:
        for item in items:
            results.append(fn(item))
            if cancel_check and cancel_check():
                raise RunCancelledError(f"cancelled after {len(results)} of {len(items)} jobs")
        return results

    futures = [get_executor(workers).submit(fn, item) for item in items]
    for future in futures:
        results.append(future.result())
        if cancel_check and cancel_check():
            for pending in futures:
                pending.cancel()
            raise RunCancelledError(f"cancelled after {len(results)} of {len(items)} jobs")
    return results


def shutdown_executor(wait: bool = True) -> None:
    """Shut down the shared executor (e.g. at CLI exit)."""
    global _executor
    if _executor is not None:
        _executor.shutdown(wait=wait, cancel_futures=True)
        _executor = None
