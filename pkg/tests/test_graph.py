from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrmetric.graph import (
    DisconnectedGraphError,
    GraphError,
    build_constraint_matrix,
    build_graph,
    complete_graph,
    enumerate_triangles,
    pair_rank,
    random_connected_graph,
    random_spanning_tree,
)
from hrmetric.hr_core import vec

from conftest import connected_graphs, random_points_variogram

# signed constraint matrix of the two-clique example, rows (12,13,14,23,24,34),
# columns (123,132,231,234,243,342)
TWO_CLIQUE_A = np.array(
    [
        [1, -1, -1, 0, 0, 0],
        [-1, 1, -1, 0, 0, 0],
        [0, 0, 0, 0, 0, 0],
        [-1, -1, 1, 1, -1, -1],
        [0, 0, 0, -1, 1, -1],
        [0, 0, 0, -1, -1, 1],
    ]
)


def test_build_graph_normalizes():
    g = build_graph(4, [(1, 0), (0, 1), (2, 0), (1, 2), (3, 1), (2, 3)])
    assert g.edges == ((0, 1), (0, 2), (1, 2), (1, 3), (2, 3))
    assert g.n_edges == 5
    assert g.has_edge(3, 1) and not g.has_edge(0, 3)


def test_path_graph_has_no_triangles():
    g = build_graph(3, [(0, 1), (1, 2)])
    sys = build_constraint_matrix(g)
    assert sys.m == 0
    assert sys.matrix.shape == (3, 0)


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraphError) as info:
        build_graph(4, [(0, 1), (2, 3)])
    assert set(info.value.component) == {2, 3}


def test_self_loop_and_range_rejected():
    with pytest.raises(GraphError):
        build_graph(3, [(0, 0), (0, 1), (1, 2)])
    with pytest.raises(GraphError):
        build_graph(3, [(0, 1), (1, 3)])


def test_two_clique_triangles(fig1_graph):
    tri = enumerate_triangles(fig1_graph)
    assert tri.tolist() == [[0, 1, 2], [1, 2, 3]]
    sys = build_constraint_matrix(fig1_graph)
    assert sys.m == 6
    assert sys.orientations.tolist() == [
        [0, 1, 2], [0, 2, 1], [1, 2, 0], [1, 2, 3], [1, 3, 2], [2, 3, 1]
    ]


def test_two_clique_matrix_exact(fig1_graph):
    a = build_constraint_matrix(fig1_graph).matrix.toarray()
    np.testing.assert_array_equal(a, TWO_CLIQUE_A)


def test_k3_matrix():
    a = build_constraint_matrix(complete_graph(3)).matrix.toarray()
    np.testing.assert_array_equal(a, [[1, -1, -1], [-1, 1, -1], [-1, -1, 1]])


def test_complete_counts():
    sys = build_constraint_matrix(complete_graph(5))
    assert len(sys.triangles) == 10 and sys.m == 30


def test_pair_rank_lexicographic():
    d = 6
    ranks = [int(pair_rank(i, j, d)) for i, j in combinations(range(d), 2)]
    assert ranks == list(range(d * (d - 1) // 2))


@pytest.mark.parametrize("d", [3, 4, 5])
def test_columns_exhaustive(d):
    rng = np.random.default_rng(d)
    for g in connected_graphs(d):
        sys = build_constraint_matrix(g)
        a = sys.matrix.toarray()
        if sys.m == 0:
            continue
        assert np.all(a.sum(axis=0) == -1)
        assert np.all((a != 0).sum(axis=0) == 3)
        assert np.all((a == 1).sum(axis=0) == 1)
        gamma = random_points_variogram(d, rng)
        np.testing.assert_allclose(a.T @ vec(gamma), sys.evaluate(gamma), rtol=0, atol=4e-16 * gamma.max())


@given(st.integers(3, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_columns_random(d, seed):
    g = random_connected_graph(d, 1.0 if d == 3 else 0.6, seed)
    sys = build_constraint_matrix(g)
    a = sys.matrix.toarray()
    assert np.all(a.sum(axis=0) == -1)
    gamma = random_points_variogram(d, np.random.default_rng(seed))
    np.testing.assert_allclose(a.T @ vec(gamma), sys.evaluate(gamma), rtol=0, atol=4e-16 * gamma.max())
    eta = np.random.default_rng(seed).random(sys.m)
    np.testing.assert_allclose(sys.apply(eta), a @ eta, atol=1e-14)


@given(st.integers(3, 30), st.integers(0, 2**32 - 1), st.floats(0.1, 1.0))
@settings(max_examples=40, deadline=None)
def test_triangles_match_brute_force(d, seed, frac):
    tree_frac = (d - 1) / (d * (d - 1) / 2)
    g = random_connected_graph(d, max(frac, tree_frac + 1e-9), seed)
    adj = g.adjacency
    brute = [t for t in combinations(range(d), 3) if adj[t[0], t[1]] and adj[t[0], t[2]] and adj[t[1], t[2]]]
    assert [tuple(t) for t in enumerate_triangles(g).tolist()] == brute


def test_random_graph_deterministic():
    assert random_connected_graph(20, 0.2, 7) == random_connected_graph(20, 0.2, 7)


@given(st.integers(3, 40), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_random_graph_contract(d, seed):
    frac = max(0.2, 2.0 / d)
    g = random_connected_graph(d, frac, seed)
    rebuilt = build_graph(d, g.edges)
    assert rebuilt == g
    assert len(enumerate_triangles(g)) >= 1


def test_random_graph_density_band():
    m = [build_constraint_matrix(random_connected_graph(20, 0.2, s)).m for s in range(100)]
    assert 15 <= np.mean(m) <= 60


def test_random_graph_fraction_too_low():
    with pytest.raises(GraphError):
        random_connected_graph(20, 0.05, 0)


def test_random_spanning_tree_is_tree():
    rng = np.random.default_rng(3)
    for d in range(2, 12):
        edges = random_spanning_tree(d, rng)
        assert len(edges) == d - 1
        build_graph(d, edges)
