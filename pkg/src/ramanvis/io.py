"""CSV and JSON emission for plot-ready results.

CSV files start with ``#``-prefixed ``key: value`` metadata lines, then a
header row with a fixed column order. Floats are written with ``repr`` so a
read-back is exact and identical inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = ["write_csv", "read_csv", "write_json", "sha256_file", "to_jsonable"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, columns: Mapping[str, np.ndarray], meta: Mapping[str, object] | None = None) -> Path:
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    n = {len(d) for d in data}
    if len(n) > 1:
        raise ValueError(f"columns differ in length: {sorted(n)}")
    lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    meta: dict[str, str] = {}
    rows = []
    header = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        elif line.strip():
            rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header row")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return meta, {name: arr[:, i] for i, name in enumerate(header)}


def to_jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
