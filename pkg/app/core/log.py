"""Process-wide logging helpers.

``setup_logging()`` installs a rotating file handler (JSON lines or plain
text) and, for the CLI, a plain stderr handler.

``run_context()`` tags every record emitted inside it with a training-run id;
``timed()`` logs how long a block took and which numerical safeguards fired.
"""

from __future__ import annotations

import contextlib
import json
import logging
import sys
import time
import uuid
from collections.abc import Generator
from contextvars import ContextVar
from logging.handlers import RotatingFileHandler
from typing import Any

from app.config import get_settings
from app.core import diagnostics

_run_id: ContextVar[str] = ContextVar("mpg_run_id", default="")

_EXTRA_KEYS = ("duration_ms", "step", "env", "episode", "cell", "agent", "counters", "error")

PLAIN_FORMAT = "%(asctime)s %(levelname)-7s %(name)s [%(run_id)s] %(message)s"

timing_logger = logging.getLogger("app.timing")


class RunIdFilter(logging.Filter):
    """Copy the current run id onto each record as ``record.run_id``."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = _run_id.get() or "-"
        return True


class StructuredFormatter(logging.Formatter):
    """One JSON object per record.

    Fields: timestamp, level, logger, message, run_id (inside a run) and the
    known extras in ``_EXTRA_KEYS``.
    """

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        rid = _run_id.get()
        if rid:
            entry["run_id"] = rid
        entry.update({key: getattr(record, key) for key in _EXTRA_KEYS if getattr(record, key, None) is not None})
        if record.exc_info and record.exc_info[1]:
            entry["exception"] = f"{type(record.exc_info[1]).__name__}: {record.exc_info[1]}"
        return json.dumps(entry, ensure_ascii=False, default=str)


def setup_logging(*, json_format: bool | None = None, console: bool = False) -> None:
    """Replace the root handlers with a rotating file handler.

    Args:
        json_format: JSON lines in the file. Defaults to ``settings.log_json``.
        console: Also write plain lines to stderr.
    """
    settings = get_settings()
    if json_format is None:
        json_format = settings.log_json

    root = logging.getLogger()
    for old in root.handlers[:]:
        root.removeHandler(old)

    plain = logging.Formatter(PLAIN_FORMAT)
    file_handler = RotatingFileHandler(
        settings.log_file,
        encoding="utf-8",
        maxBytes=settings.log_max_bytes,
        backupCount=settings.log_backup_count,
    )
    file_handler.setFormatter(StructuredFormatter() if json_format else plain)
    handlers: list[logging.Handler] = [file_handler]
    if console:
        stream = logging.StreamHandler(sys.stderr)
        stream.setFormatter(plain)
        handlers.append(stream)

    for handler in handlers:
        handler.addFilter(RunIdFilter())
        root.addHandler(handler)
    root.setLevel(settings.log_level)


def get_run_id() -> str:
    """Current run id, empty outside :func:`run_context`."""
    return _run_id.get()


@contextlib.contextmanager
def run_context(rid: str | None = None) -> Generator[str, None, None]:
    """Tag records emitted inside the block with *rid* (random when omitted).

    Nested contexts restore the outer id on exit::

        with run_context("fl4-c000-a03"):
            train(env, config)
    """
    token = _run_id.set(rid or uuid.uuid4().hex[:12])
    try:
        yield _run_id.get()
    finally:
        _run_id.reset(token)


@contextlib.contextmanager
def timed(operation: str, **extra: Any) -> Generator[None, None, None]:
    """Log the duration of the block at INFO (ERROR when it raises).

    Safeguard counters bumped inside the block are attached as ``counters``.
    """
    start = time.perf_counter()
    counts = diagnostics.snapshot()
    timing_logger.debug("[START] %s", operation, extra={"step": operation, **extra})

    def fields() -> dict[str, Any]:
        fired = diagnostics.since(counts)
        elapsed = round((time.perf_counter() - start) * 1000)
        return {"duration_ms": elapsed, "step": operation, "counters": fired or None, **extra}

    try:
        yield
    except Exception:
        info = fields()
        timing_logger.error("[FAILED] %s after %dms", operation, info["duration_ms"], extra=info)
        raise
    info = fields()
    timing_logger.info("[DONE] %s in %dms", operation, info["duration_ms"], extra=info)
