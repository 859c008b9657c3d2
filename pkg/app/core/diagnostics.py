"""Thread-safe diagnostic counters.

Numerical safeguards (logit clamping, importance-weight clipping) never fail
loudly; they bump a named counter instead so training logs can report how
often they fired.
"""

from __future__ import annotations

import threading
from collections import Counter

LOGIT_CLAMP = "logit_clamp"
WEIGHT_CLIP = "weight_clip"

_lock = threading.Lock()
_counts: Counter[str] = Counter()


def bump(name: str, amount: int = 1) -> None:
    """Increase counter *name* by *amount*."""
    if amount <= 0:
        return
    with _lock:
        _counts[name] += amount


def get_count(name: str) -> int:
    """Return the current value of counter *name* (0 if never bumped)."""
    with _lock:
        return _counts[name]


def snapshot() -> dict[str, int]:
    """Return a copy of all counters."""
    with _lock:
        return dict(_counts)


def reset() -> None:
    """Zero every counter."""
    with _lock:
        _counts.clear()


def since(start: dict[str, int]) -> dict[str, int]:
    """Counters that grew after *start* (a :func:`snapshot`), with their increase."""
    now = snapshot()
    return {name: value - start.get(name, 0) for name, value in now.items() if value > start.get(name, 0)}
