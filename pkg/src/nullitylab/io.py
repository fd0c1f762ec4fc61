"""Deterministic CSV and JSON writers for fields and reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats (to ``None``) recursively."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return repr(x) if math.isfinite(x) else ""
    if isinstance(v, (np.bool_, bool)):
        return int(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def coordinate_header(m: int, prefix: str = "x") -> list:
    return [f"{prefix}_{i + 1}" for i in range(m)]


def write_field_csv(path, points: np.ndarray, columns: dict) -> Path:
    """One row per point: ``x_1..x_m`` followed by the named value columns."""
    points = np.asarray(points, dtype=float)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    rows = ([*p.tolist(), *(c[i] for c in cols)] for i, p in enumerate(points))
    return write_csv(path, coordinate_header(points.shape[1]) + names, rows)


def read_csv(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
