"""
Readers and writers for matrices, graphs and observation tables.

Matrices: headerless dense CSV (``%.17g``) or JSON ``{"dim": d, "entries": [[...]]}``.
Graphs: JSON ``{"d": d, "edges": [[i, j], ...]}`` or a two-column edge CSV,
both with 1-based vertex labels.
"""
import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from .graph import build_graph

__all__ = [
    "InputError",
    "read_matrix",
    "write_matrix_csv",
    "write_matrix_json",
    "matrix_to_json",
    "read_graph",
    "write_graph_json",
    "read_data_csv",
    "write_json",
]

logger = logging.getLogger(__name__)


class InputError(ValueError):
    """Malformed or unreadable input file."""


def _finite(x):
    # JSON has no NaN/inf literals
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return _finite(obj)


def write_json(obj, path):
    text = json.dumps(_clean(obj), indent=2, allow_nan=False)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def matrix_to_json(m):
    m = np.asarray(m, dtype=float)
    return {"dim": int(m.shape[0]), "entries": m.tolist()}


def write_matrix_csv(m, path):
    m = np.asarray(m, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_matrix_json(m, path):
    write_json(matrix_to_json(m), path)


def _parse_matrix_json(obj, src):
    if isinstance(obj, dict) and "entries" in obj:
        entries = obj["entries"]
    elif isinstance(obj, list):
        entries = obj
    else:
        raise InputError(f"{src}: expected an object with 'entries'")
    try:
        m = np.asarray(entries, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{src}: entries are not a numeric matrix") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"{src}: matrix must be square, got shape {m.shape}")
    if isinstance(obj, dict) and "dim" in obj and int(obj["dim"]) != m.shape[0]:
        raise InputError(f"{src}: dim={obj['dim']} does not match {m.shape[0]} rows")
    return m


def read_matrix(path):
    """Read a square matrix from a ``.json`` or headerless CSV file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith(("{", "[")):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
        return _parse_matrix_json(obj, path)
    rows = []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rows.append([float(c) for c in row])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise InputError(f"{path}: matrix must be square with {len(rows)} columns per row")
    return np.asarray(rows)


def read_graph(path, d=None):
    """Read a graph file with 1-based labels into a 0-based :class:`UndirectedGraph`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
            n = int(obj["d"])
            edges = [(int(a), int(b)) for a, b in obj["edges"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: expected {{'d': int, 'edges': [[i, j], ...]}}") from exc
    else:
        edges = []
        for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                a, b = (int(c) for c in row[:2])
            except ValueError as exc:
                if lineno == 1:
                    continue  # header
                raise InputError(f"{path}:{lineno}: expected two integer labels") from exc
            edges.append((a, b))
        n = max((max(e) for e in edges), default=0)
    if d is not None:
        n = int(d)
    return build_graph(n, [(a - 1, b - 1) for a, b in edges])


def write_graph_json(graph, path):
    write_json({"d": graph.d, "edges": [[i + 1, j + 1] for i, j in graph.edges]}, path)


def read_data_csv(path, header=False):
    """Read an ``n x d`` observation table; rows with missing cells are dropped."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if header and rows:
        rows = rows[1:]
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(rows[0])
    out = []
    dropped = 0
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) != width:
            raise InputError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
        vals = []
        for col, c in enumerate(row):
            c = c.strip()
            if c == "" or c.lower() in ("na", "nan"):
                vals = None
                break
            try:
                vals.append(float(c))
            except ValueError as exc:
                raise InputError(f"{path}: row {lineno}, column {col + 1}: cannot parse {c!r}") from exc
        if vals is None:
            dropped += 1
            continue
        out.append(vals)
    if dropped:
        logger.info("dropped %d rows with missing values from %s", dropped, path)
    if not out:
        raise InputError(f"{path}: every row has missing values")
    return np.asarray(out)
