"""Atomic file output and number formatting shared by the CLI and scripts."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def fmt(x) -> str:
    """Floats with 12 significant digits."""
    return format(float(x), ".12g")


def _round_floats(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dumps_json(doc) -> str:
    return json.dumps(_round_floats(doc), indent=2) + "\n"


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
