"""Deterministic text serialization helpers.

Exported files must be byte-identical across runs, so floats are
printed with a fixed significant-digit format and JSON always uses
sorted keys. Nothing here depends on locale, time or process state.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

__all__ = ["fmt_float", "canonical_json", "write_json", "sha256_of_obj"]


def fmt_float(x: float) -> str:
    """Format a float with 12 significant digits (round-trips to ~1e-12)."""
    return format(float(x), ".12g")


def canonical_json(obj) -> str:
    """Compact JSON with sorted keys; the canonical form used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(obj, path: str | Path) -> None:
    """Pretty JSON with sorted keys and a trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def sha256_of_obj(obj) -> str:
    """Hex digest of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
