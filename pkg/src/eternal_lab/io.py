"""CSV and JSON writers for traces, profiles and reports.

CSV follows RFC 4180 (comma separated, CRLF line ends, mandatory header) and
prints floats with 17 significant digits so values round-trip exactly. JSON
is written with sorted keys so identical results give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .evolution import EvolutionTrace, SupProfile


def fmt(x) -> str:
    return "%.17g" % float(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} has no header row")
    return rows[0], rows[1:]


def write_trace(path, trace: EvolutionTrace, stride: int = 1) -> Path:
    """Long format: one row per (time, node) with columns ``t, y1[, y2], u``."""
    axes = [f"y{k + 1}" for k in range(trace.grid.dim)]
    nodes = trace.grid.nodes

    def rows():
        for k in range(0, trace.times.size, stride):
            t = float(trace.times[k])
            for p, u in zip(nodes, trace.values[k]):
                yield (t, *map(float, p), float(u))

    return write_csv(path, ["t", *axes, "u"], rows())


def write_profile(path, profile: SupProfile) -> Path:
    return write_csv(path, ["t", "u_hat"], ((float(t), float(v)) for t, v in zip(profile.times, profile.values)))


def write_series(path, columns: dict) -> Path:
    """Columns of equal length, written side by side."""
    names = list(columns)
    data = [list(columns[n]) for n in names]
    if len({len(c) for c in data}) > 1:
        raise ValueError("series columns differ in length")
    return write_csv(path, names, (tuple(float(c[i]) for c in data) for i in range(len(data[0]) if data else 0)))


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path
