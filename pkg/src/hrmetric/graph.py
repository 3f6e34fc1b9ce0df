"""
Undirected graphs, triangle enumeration and the triangle-inequality
constraint system.

Vertices are 0-based in the Python API. File formats use 1-based labels
(see :mod:`hrmetric.io`).
"""
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import connected_components

__all__ = [
    "GraphError",
    "DisconnectedGraphError",
    "UndirectedGraph",
    "TriangleConstraintSystem",
    "build_graph",
    "complete_graph",
    "pair_rank",
    "enumerate_triangles",
    "build_constraint_matrix",
    "random_connected_graph",
    "random_spanning_tree",
]


class GraphError(ValueError):
    pass


class DisconnectedGraphError(GraphError):
    def __init__(self, component):
        self.component = tuple(int(v) for v in component)
        super().__init__(
            f"graph is disconnected; component not reachable from vertex 0: {list(self.component)}"
        )


@dataclass(frozen=True)
class UndirectedGraph:
    """Connected simple graph on vertices ``0..d-1``.

    ``edges`` is a sorted tuple of pairs ``(i, j)`` with ``i < j``.
    """

    d: int
    edges: tuple

    @cached_property
    def adjacency(self):
        a = np.zeros((self.d, self.d), dtype=bool)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = True
            a[e[:, 1], e[:, 0]] = True
        a.flags.writeable = False
        return a

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def is_complete(self):
        return self.n_edges == comb(self.d, 2)

    def has_edge(self, i, j):
        return bool(self.adjacency[i, j])

    def edge_array(self):
        return np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)


def build_graph(d, edge_list):
    """Normalize and validate an edge list into a connected graph.

    Raises
    ------
    GraphError
        On self-loops or labels outside ``0..d-1``.
    DisconnectedGraphError
        If the graph is not connected; carries the offending component.
    """
    d = int(d)
    if d < 1:
        raise GraphError(f"vertex count must be positive, got {d}")
    edges = set()
    for e in edge_list:
        i, j = (int(v) for v in e)
        if i == j:
            raise GraphError(f"self-loop at vertex {i}")
        if not (0 <= i < d and 0 <= j < d):
            raise GraphError(f"edge ({i}, {j}) has a label outside [0, {d})")
        edges.add((min(i, j), max(i, j)))
    edges = tuple(sorted(edges))
    if d > 1:
        if edges:
            e = np.asarray(edges)
            adj = scipy.sparse.coo_matrix(
                (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(d, d)
            )
            _, labels = connected_components(adj, directed=False)
        else:
            labels = np.arange(d)
        if np.any(labels != labels[0]):
            raise DisconnectedGraphError(np.flatnonzero(labels != labels[0]))
    return UndirectedGraph(d, edges)


def complete_graph(d):
    return UndirectedGraph(int(d), tuple((i, j) for i in range(d) for j in range(i + 1, d)))


def pair_rank(i, j, d):
    """Lexicographic rank of the pair ``i < j`` among all pairs of ``d`` vertices."""
    i = np.asarray(i)
    j = np.asarray(j)
    return i * (2 * d - i - 1) // 2 + (j - i - 1)


def _triangles(adj):
    d = adj.shape[0]
    out = []
    for i in range(d):
        nb = np.flatnonzero(adj[i, i + 1:]) + i + 1
        for j in nb:
            common = nb[nb > j]
            common = common[adj[j, common]]
            for k in common:
                out.append((i, j, k))
    return np.asarray(out, dtype=np.intp).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class TriangleConstraintSystem:
    """Triangle inequalities ``g <= 0`` for a graph.

    ``orientations`` holds one row ``(a, b, c)`` per constraint, encoding
    ``g = gamma_ab - gamma_ac - gamma_bc``. Per triangle ``(i, j, k)`` the
    three rows are ``(i,j,k), (i,k,j), (j,k,i)``.
    """

    d: int
    triangles: np.ndarray
    orientations: np.ndarray
    # column-wise pair ranks of the +1 and the two -1 entries of A
    pos_rows: np.ndarray = field(repr=False)
    neg_rows: np.ndarray = field(repr=False)

    @property
    def m(self):
        return len(self.orientations)

    @property
    def n_pairs(self):
        return self.d * (self.d - 1) // 2

    @cached_property
    def matrix(self):
        """Sparse ``n_pairs x m`` signed constraint matrix ``A``."""
        m = self.m
        cols = np.arange(m)
        rows = np.concatenate([self.pos_rows, self.neg_rows[:, 0], self.neg_rows[:, 1]])
        data = np.concatenate([np.ones(m), -np.ones(2 * m)])
        return scipy.sparse.csc_matrix(
            (data, (rows, np.tile(cols, 3))), shape=(self.n_pairs, m)
        )

    def evaluate(self, gamma):
        """Constraint values ``g`` at ``gamma`` in orientation order."""
        gamma = np.asarray(gamma, dtype=float)
        o = self.orientations
        return gamma[o[:, 0], o[:, 1]] - gamma[o[:, 0], o[:, 2]] - gamma[o[:, 1], o[:, 2]]

    def apply(self, eta):
        """Pair vector ``A @ eta``."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.m,):
            raise ValueError(f"eta must have length {self.m}, got shape {eta.shape}")
        n = self.n_pairs
        out = np.bincount(self.pos_rows, weights=eta, minlength=n)
        out -= np.bincount(self.neg_rows[:, 0], weights=eta, minlength=n)
        out -= np.bincount(self.neg_rows[:, 1], weights=eta, minlength=n)
        return out

    def apply_matrix(self, eta):
        """``A @ eta`` as a symmetric zero-diagonal ``d x d`` matrix."""
        v = self.apply(eta)
        d = self.d
        m = np.zeros((d, d))
        iu = np.triu_indices(d, 1)
        m[iu] = v
        m.T[iu] = v
        return m


def enumerate_triangles(graph):
    """Lexicographically sorted triangles ``(i < j < k)`` of ``graph``."""
    return _triangles(graph.adjacency)


def build_constraint_matrix(graph):
    tri = enumerate_triangles(graph)
    d = graph.d
    if len(tri):
        i, j, k = tri.T
        orient = np.stack(
            [np.stack([i, j, k], 1), np.stack([i, k, j], 1), np.stack([j, k, i], 1)], axis=1
        ).reshape(-1, 3)
    else:
        orient = np.zeros((0, 3), dtype=np.intp)

    def rank(a, b):
        return pair_rank(np.minimum(a, b), np.maximum(a, b), d)

    pos = rank(orient[:, 0], orient[:, 1])
    neg = np.stack([rank(orient[:, 0], orient[:, 2]), rank(orient[:, 1], orient[:, 2])], axis=1)
    return TriangleConstraintSystem(
        d=d,
        triangles=tri,
        orientations=orient,
        pos_rows=pos.astype(np.intp),
        neg_rows=neg.astype(np.intp).reshape(-1, 2),
    )


def random_spanning_tree(d, rng):
    """Uniform labeled spanning tree of ``K_d`` from a random Prüfer sequence."""
    if d == 1:
        return []
    if d == 2:
        return [(0, 1)]
    seq = rng.integers(0, d, size=d - 2)
    degree = np.ones(d, dtype=int)
    np.add.at(degree, seq, 1)
    edges = []
    for v in seq:
        leaf = int(np.flatnonzero(degree == 1)[0])
        edges.append((leaf, int(v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = np.flatnonzero(degree == 1)
    edges.append((int(u), int(w)))
    return edges


def random_connected_graph(d, edge_fraction=0.2, seed=None):
    """Random connected graph with at least one triangle.

    Starts from a uniform random spanning tree, adds uniformly chosen
    non-edges until ``round(edge_fraction * d(d-1)/2)`` edges are present,
    and closes a path of length two if the result is still triangle-free.
    """
    d = int(d)
    if d < 3:
        raise GraphError("need at least 3 vertices for a triangle")
    n_pairs = comb(d, 2)
    if not 0 < edge_fraction <= 1:
        raise GraphError(f"edge fraction must lie in (0, 1], got {edge_fraction}")
    target = int(round(edge_fraction * n_pairs))
    if target < d - 1:
        raise GraphError(
            f"edge fraction {edge_fraction} gives {target} edges, below the {d - 1} of a spanning tree"
        )
    rng = np.random.default_rng(seed)
    edges = {(min(a, b), max(a, b)) for a, b in random_spanning_tree(d, rng)}
    free = [p for p in zip(*np.triu_indices(d, 1)) if (int(p[0]), int(p[1])) not in edges]
    extra = target - len(edges)
    if extra > 0:
        pick = rng.choice(len(free), size=extra, replace=False)
        edges.update((int(free[t][0]), int(free[t][1])) for t in pick)
    graph = build_graph(d, edges)
    if len(enumerate_triangles(graph)) == 0:
        adj = graph.adjacency
        centers = np.flatnonzero(adj.sum(axis=1) >= 2)
        c = int(rng.choice(centers))
        nb = rng.choice(np.flatnonzero(adj[c]), size=2, replace=False)
        edges.add((int(min(nb)), int(max(nb))))
        graph = build_graph(d, edges)
    return graph
