"""Deterministic CSV/JSON writers with provenance headers."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["config_hash", "format_value", "write_csv", "write_json", "to_jsonable"]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], provenance: dict) -> None:
    """CSV with ``# key=value`` provenance lines before the header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k in sorted(provenance):
            fh.write(f"# {k}={provenance[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def write_json(path: Path, payload: dict, provenance: dict) -> None:
    body = {"provenance": provenance, **to_jsonable(payload)}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
