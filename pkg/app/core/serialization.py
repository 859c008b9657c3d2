"""JSON document I/O for MDPs, checkpoints, solutions and reports.

Arrays are written as nested lists; floats keep full ``repr`` precision so a
dump/load cycle is exact.  Reading is strict: malformed documents raise
``ConfigError``.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from app.core.errors import ConfigError


class ArrayEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays."""

    def default(self, o: Any) -> Any:
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return super().default(o)


def dumps(document: Any) -> str:
    """Serialise *document* deterministically (sorted keys, fixed indent)."""
    return json.dumps(document, cls=ArrayEncoder, indent=2, sort_keys=True)


def write_json(path: str | Path, document: Any) -> Path:
    """Write *document* to *path*, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(document) + "\n", encoding="utf-8")
    return path


def parse_json(text: str) -> Any:
    """Parse *text* as JSON, raising ``ConfigError`` when it is malformed."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON document: {exc}") from exc


def read_json(path: str | Path) -> Any:
    """Read and parse a JSON file."""
    return parse_json(Path(path).read_text(encoding="utf-8"))


def read_document(path: str | Path) -> dict[str, Any]:
    """Read a TOML or JSON configuration file into a dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    if path.suffix.lower() == ".toml":
        try:
            return tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain an object at top level")
    return data
