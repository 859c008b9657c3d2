"""Thread-safe cancellation: per-run ``CancelToken`` objects plus one process-wide token.

The CLI installs :func:`interrupt_handler` so the first Ctrl-C only raises
the process-wide flag; training loops poll :func:`cancel_requested` and stop
at the next episode.  A second Ctrl-C interrupts immediately.
"""

from __future__ import annotations

import contextlib
import logging
import signal
import threading
from collections.abc import Generator

logger = logging.getLogger(__name__)


class CancelToken:
    """Lightweight cancellation token (thread-safe).

    Usage::

        token = CancelToken()
        train(env, config, cancel_check=token.is_set)
        # from another thread or a signal handler:
        token.cancel()
    """

    __slots__ = ("_event",)

    def __init__(self) -> None:
        self._event = threading.Event()

    def cancel(self) -> None:
        """Request cancellation."""
        self._event.set()

    def is_set(self) -> bool:
        """Return ``True`` if cancellation has been requested."""
        return self._event.is_set()

    def reset(self) -> None:
        """Clear the cancellation flag for reuse."""
        self._event.clear()


# ── Process-wide token ──────────────────────────────────────────────────

_process_token = CancelToken()


def request_cancel() -> None:
    _process_token.cancel()


def clear_cancel() -> None:
    _process_token.reset()


def cancel_requested() -> bool:
    return _process_token.is_set()


@contextlib.contextmanager
def interrupt_handler() -> Generator[CancelToken, None, None]:
    """Route SIGINT to the process-wide token for the duration of the block."""
    if threading.current_thread() is not threading.main_thread():
        yield _process_token
        return

    def _on_sigint(signum, frame):  # noqa: ARG001
        if _process_token.is_set():
            raise KeyboardInterrupt
        logger.warning("interrupt received: stopping after the current episode (Ctrl-C again to abort)")
        _process_token.cancel()

    previous = signal.signal(signal.SIGINT, _on_sigint)
    try:
        yield _process_token
    finally:
        signal.signal(signal.SIGINT, previous)
        _process_token.reset()


def ignore_sigint() -> None:
    """Worker-process initializer: leave Ctrl-C handling to the parent."""
    signal.signal(signal.SIGINT, signal.SIG_IGN)
