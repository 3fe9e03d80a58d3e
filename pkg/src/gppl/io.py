"""File formats: edge lists, numeric CSV, MatrixMarket and JSON."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .graph import UndirectedGraph


class MalformedInputError(ValueError):
    """Input file that cannot be parsed."""


def read_edge_list(path) -> UndirectedGraph:
    """Parse ``n <count>`` followed by 1-based ``i j`` lines; ``#`` starts a comment."""
    n = None
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 2 or parts[0] != "n":
                    raise MalformedInputError(f"{path}:{lineno}: expected 'n <count>' first")
                n = _int(parts[1], path, lineno)
                continue
            if len(parts) != 2:
                raise MalformedInputError(f"{path}:{lineno}: expected 'i j'")
            i, j = (_int(p, path, lineno) for p in parts)
            if not (1 <= i <= n and 1 <= j <= n):
                raise MalformedInputError(f"{path}:{lineno}: node out of range 1..{n}")
            edges.append((i - 1, j - 1))
    if n is None:
        raise MalformedInputError(f"{path}: empty edge list")
    try:
        return UndirectedGraph(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    except ValueError as exc:
        raise MalformedInputError(f"{path}: {exc}") from exc


def _int(text, path, lineno):
    try:
        return int(text)
    except ValueError:
        raise MalformedInputError(f"{path}:{lineno}: not an integer: {text!r}") from None


def format_edge_list(graph: UndirectedGraph) -> str:
    lines = [f"n {graph.n}"] + [f"{i + 1} {j + 1}" for i, j in graph.edges]
    return "\n".join(lines) + "\n"


def write_edge_list(graph: UndirectedGraph, path) -> None:
    Path(path).write_text(format_edge_list(graph), encoding="utf-8")


def _parse_row(row):
    vals = [float(c) for c in row]
    if not all(math.isfinite(v) for v in vals):
        raise MalformedInputError("non-finite value")
    return vals


def read_csv_matrix(path) -> np.ndarray:
    """Numeric CSV, row-major. A first row that is not numeric is taken as a header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise MalformedInputError(f"{path}: no data")
    out = []
    for idx, row in enumerate(rows):
        try:
            out.append(_parse_row(row))
        except ValueError as exc:
            if idx == 0 and not isinstance(exc, MalformedInputError):
                continue  # header
            raise MalformedInputError(f"{path}: row {idx + 1}: {exc}") from None
    if not out:
        raise MalformedInputError(f"{path}: no data rows")
    width = len(out[0])
    if any(len(r) != width for r in out):
        raise MalformedInputError(f"{path}: ragged rows")
    return np.array(out, dtype=float)


def read_csv_vector(path) -> np.ndarray:
    M = read_csv_matrix(path)
    if M.ndim != 2 or min(M.shape) != 1:
        raise MalformedInputError(f"{path}: expected a single row or column")
    return M.ravel()


def _fmt(v) -> str:
    return format(float(v), ".17g")


def format_csv(M, header=None) -> str:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    buf = _io.StringIO()
    if header is not None:
        buf.write(",".join(header) + "\n")
    for row in M:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(M, path, header=None) -> None:
    """17 significant digits, so doubles round-trip exactly."""
    Path(path).write_text(format_csv(M, header), encoding="utf-8")


def write_matrix_market(M, path) -> None:
    """Coordinate format for sparse input, array format for dense."""
    M = sp.coo_matrix(M) if sp.issparse(M) else np.asarray(M)
    scipy.io.mmwrite(str(path), M, precision=17)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite numbers as null."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
