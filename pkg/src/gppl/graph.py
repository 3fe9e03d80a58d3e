"""Graphs, incidence/Laplacian matrices and graph difference operators.

Nodes are 0-based in the Python API. The edge-list text format in
:mod:`gppl.io` is 1-based and converted on read/write.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc


@dataclass(frozen=True)
class UndirectedGraph:
    """Simple undirected graph with a canonical (sorted) edge list.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : array-like of shape (p, 2)
        Node pairs. Each pair is reordered so that ``i < j`` and the list is
        sorted lexicographically; the row order of every operator derived from
        the graph follows this order.
    """

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("graph needs at least one node")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            e = np.sort(e, axis=1)
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            if e.min() < 0 or e.max() >= n:
                raise ValueError("edge endpoint out of range")
            e = e[np.lexsort((e[:, 1], e[:, 0]))]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise ValueError("duplicate edge")
        e.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", e)

    @property
    def p(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def __eq__(self, other):
        if not isinstance(other, UndirectedGraph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))


def path_graph(n: int) -> UndirectedGraph:
    idx = np.arange(n - 1)
    return UndirectedGraph(n, np.column_stack([idx, idx + 1]))


def grid_graph(rows: int, cols: int) -> UndirectedGraph:
    """2d grid; node (i, j) maps to ``j * rows + i`` (column-major stacking)."""
    node = np.arange(rows * cols).reshape(cols, rows).T
    vertical = np.column_stack([node[:-1, :].ravel(), node[1:, :].ravel()])
    horizontal = np.column_stack([node[:, :-1].ravel(), node[:, 1:].ravel()])
    return UndirectedGraph(rows * cols, np.vstack([vertical, horizontal]))


def is_path_graph(graph: UndirectedGraph) -> bool:
    """True if the edges are exactly (0,1), (1,2), ..., (n-2, n-1)."""
    idx = np.arange(graph.n - 1)
    return graph.p == graph.n - 1 and np.array_equal(
        graph.edges, np.column_stack([idx, idx + 1]))


def build_incidence(graph: UndirectedGraph) -> sp.csr_matrix:
    """Oriented incidence matrix F (p x n): -1 at the smaller endpoint, +1 at the larger."""
    p = graph.p
    rows = np.repeat(np.arange(p), 2)
    cols = graph.edges.ravel()
    vals = np.tile(np.array([-1, 1], dtype=np.int64), p)
    return sp.csr_matrix((vals, (rows, cols)), shape=(p, graph.n), dtype=np.int64)


def build_laplacian(graph: UndirectedGraph) -> sp.csr_matrix:
    F = build_incidence(graph)
    return (F.T @ F).tocsr()


@dataclass(frozen=True)
class DiffOperator:
    """Graph difference operator of order ``k + 1``.

    ``matrix`` is an integer CSR matrix with ``m`` rows, where ``m = n`` for odd
    ``k`` and ``m = p`` for even ``k``.
    """

    k: int
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def build_diff_operator(graph: UndirectedGraph, k: int) -> DiffOperator:
    """Apply the recursion Delta^(1) = F, then alternately left-multiply by F^T and F."""
    k = int(k)
    if k < 0:
        raise ValueError(f"order parameter k must be >= 0, got {k}")
    F = build_incidence(graph)
    FT = F.T.tocsr()
    op = F
    for step in range(1, k + 1):
        op = (FT @ op) if step % 2 == 1 else (F @ op)
    op = op.tocsr()
    op.eliminate_zeros()
    op.sort_indices()
    return DiffOperator(k, op)


def univariate_diff(n: int, order: int) -> np.ndarray:
    """Dense univariate difference matrix of the given order, shape (n - order, n)."""
    if order < 0 or order >= n:
        raise ValueError("need 0 <= order < n")
    out = np.eye(n, dtype=np.int64)
    for _ in range(order):
        out = out[1:] - out[:-1]
    return out


def connected_components(graph: UndirectedGraph, excluded_edges=()) -> list[list[int]]:
    """Components of the graph after deleting the edges with the given indices.

    Components are returned as sorted node lists, ordered by their smallest node.
    """
    excluded = np.asarray(list(excluded_edges), dtype=np.int64).ravel()
    if excluded.size and (excluded.min() < 0 or excluded.max() >= graph.p):
        raise IndexError("excluded edge index out of range")
    keep = np.ones(graph.p, dtype=bool)
    keep[excluded] = False
    e = graph.edges[keep]
    adj = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(graph.n, graph.n))
    _, labels = _cc(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for node, lab in enumerate(labels):
        groups.setdefault(lab, []).append(node)
    return sorted(groups.values(), key=lambda g: g[0])


def n_components(graph: UndirectedGraph) -> int:
    return len(connected_components(graph))


def max_degree(graph: UndirectedGraph) -> int:
    return int(graph.degrees().max()) if graph.p else 0


def structure_counts(beta, op: DiffOperator, threshold: float = 1e-8) -> tuple[int, int]:
    """Return (s1, s2): entries of ``op @ beta`` and of ``beta`` above ``threshold`` in magnitude."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (op.n,):
        raise ValueError(f"beta has shape {beta.shape}, operator expects ({op.n},)")
    s1 = int(np.count_nonzero(np.abs(op.matrix @ beta) > threshold))
    s2 = int(np.count_nonzero(np.abs(beta) > threshold))
    return s1, s2


def random_graph(n: int, edge_prob: float, rng: np.random.Generator) -> UndirectedGraph:
    """Erdos-Renyi graph, mostly for tests and demos."""
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < edge_prob
    return UndirectedGraph(n, np.column_stack([iu[mask], ju[mask]]))
