from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrmetric.graph import build_graph, complete_graph
from hrmetric.hr_core import gamma_to_theta, q_to_gamma
from hrmetric.sim import sample_extremal_function
from hrmetric.variogram import (
    ExceedanceDataset,
    check_emtp2,
    check_metric,
    count_satisfied,
    empirical_variogram,
    sample_variogram,
    select_exceedances,
    to_exponential_margins,
)
from hrmetric.graph import build_constraint_matrix

from conftest import random_laplacian_q, random_points_variogram, theta_of

ALL2 = 2.0 * (np.ones((3, 3)) - np.eye(3))


def naive_sample_variogram(z):
    n, d = z.shape
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            out[i, j] = sum((z[l, i] - z[l, j]) ** 2 for l in range(n)) / n
    return out


# ---- margins -------------------------------------------------------------


def test_sorted_column_maps_to_exponential_scores():
    n = 7
    x = np.column_stack([np.arange(n, dtype=float), np.arange(n)[::-1] * 2.0])
    out = to_exponential_margins(x)
    expected = -np.log(1 - np.arange(1, n + 1) / (n + 1))
    np.testing.assert_allclose(out[:, 0], expected, rtol=1e-15)
    np.testing.assert_allclose(out[:, 1], expected[::-1], rtol=1e-15)


def test_ties_share_value():
    x = np.array([[1.0, 0.1], [2.0, 0.5], [2.0, 0.2], [3.0, 0.3]])
    out = to_exponential_margins(x)
    assert out[1, 0] == out[2, 0]


def test_constant_column_named():
    x = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(ValueError, match="column 1"):
        to_exponential_margins(x)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_margins_monotone_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((50, 3))
    y = np.column_stack([np.exp(x[:, 0]), x[:, 1] ** 3, 5 * x[:, 2] - 2])
    np.testing.assert_array_equal(to_exponential_margins(x), to_exponential_margins(y))


# ---- exceedances ---------------------------------------------------------


def test_all_rows_retained_is_shift():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=(30, 3)) + 1.0
    p = 0.5
    ds = select_exceedances(x, p)
    u = -np.log(1 - p)
    assert ds.n == 30
    np.testing.assert_allclose(ds.values, x - u)
    for k in range(3):
        np.testing.assert_array_equal(ds.exceedance_sets[k], np.flatnonzero(x[:, k] > u))


def test_silent_coordinate_has_empty_set():
    rng = np.random.default_rng(1)
    x = rng.exponential(size=(200, 3))
    x[:, 2] = 0.01
    ds = select_exceedances(x, 0.8)
    assert len(ds.exceedance_sets[2]) == 0
    ev = empirical_variogram(ds)
    assert ev.zero_anchors == [2]
    np.testing.assert_array_equal(ev.per_anchor[2], 0.0)


def test_retained_fraction_under_independence():
    n, d, p = 100_000, 2, 0.85
    rng = np.random.default_rng(11)
    exp_data = to_exponential_margins(rng.standard_normal((n, d)))
    frac = select_exceedances(exp_data, p).n / n
    target = 1 - p**d
    se = np.sqrt(target * (1 - target) / n)
    assert abs(frac - target) < 3 * se


def test_too_few_exceedances():
    with pytest.raises(ValueError):
        select_exceedances(np.zeros((10, 2)) + 0.01, 0.9)


# ---- empirical variogram -------------------------------------------------


def test_identical_rows_give_zero():
    ds = ExceedanceDataset(values=np.array([[1.0, 2.0, 0.5], [1.0, 2.0, 0.5]]), exceedance_sets=tuple(
        np.array([0, 1]) for _ in range(3)
    ))
    np.testing.assert_array_equal(empirical_variogram(ds).matrix, 0.0)


def test_all_anchors_empty_raises():
    ds = ExceedanceDataset(values=np.ones((3, 2)), exceedance_sets=(np.array([0]), np.array([], dtype=int)))
    with pytest.raises(ValueError):
        empirical_variogram(ds)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_per_anchor_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((25, 4))
    sets = tuple(np.flatnonzero(y[:, k] > 0) for k in range(4))
    ds = ExceedanceDataset(values=y, exceedance_sets=sets)
    ev = empirical_variogram(ds)
    for k in range(4):
        if len(sets[k]) < 2:
            continue
        z = y[sets[k]]
        np.testing.assert_allclose(ev.per_anchor[k], naive_sample_variogram(z - z.mean(0)), atol=1e-12)
    np.testing.assert_allclose(ev.matrix, ev.per_anchor.sum(0) / 4, atol=1e-15)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_centering_invariance(seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((30, 3))
    sets = tuple(np.arange(30) for _ in range(3))
    base = empirical_variogram(ExceedanceDataset(values=y, exceedance_sets=sets)).matrix
    shifted = empirical_variogram(ExceedanceDataset(values=y + rng.normal(), exceedance_sets=sets)).matrix
    np.testing.assert_allclose(base, shifted, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    x = to_exponential_margins(rng.standard_normal((300, 4)) + rng.standard_normal((300, 1)))
    perm = rng.permutation(4)
    g = empirical_variogram(select_exceedances(x, 0.8)).matrix
    gp = empirical_variogram(select_exceedances(x[:, perm], 0.8)).matrix
    np.testing.assert_allclose(gp, g[np.ix_(perm, perm)], atol=1e-12)


def test_empirical_variogram_shape_properties():
    rng = np.random.default_rng(4)
    x = to_exponential_margins(rng.standard_normal((500, 5)) + rng.standard_normal((500, 1)))
    g = empirical_variogram(select_exceedances(x, 0.85)).matrix
    np.testing.assert_array_equal(g, g.T)
    assert np.all(np.diag(g) == 0) and np.all(g >= 0)
    g2 = empirical_variogram(select_exceedances(x, 0.85)).matrix
    np.testing.assert_array_equal(g, g2)


def test_extremal_samples_recover_gamma():
    rng = np.random.default_rng(8)
    gamma = random_points_variogram(4, rng)
    for k in range(4):
        w = sample_extremal_function(gamma, k, 200_000, seed=k)
        est = sample_variogram(w - w.mean(0))
        assert np.max(np.abs(est - gamma)) < 0.05 * gamma.max()


# ---- diagnostics ---------------------------------------------------------


@pytest.mark.parametrize("d", [3, 4, 7, 12])
def test_complete_graph_inequality_total(d):
    g = random_points_variogram(d, np.random.default_rng(d))
    assert check_metric(g).total_inequalities == 3 * comb(d, 3)
    assert check_metric(g, complete_graph(d)).total_inequalities == 3 * comb(d, 3)


def test_complete_graph_inequality_total_d79():
    g = 2.0 * (np.ones((79, 79)) - np.eye(79))
    rep = check_metric(g)
    assert rep.total_inequalities == 237237
    assert rep.violated == 0


def test_all2_no_violations(fig1_graph):
    g = 2.0 * (np.ones((4, 4)) - np.eye(4))
    assert check_metric(g, fig1_graph).violated == 0
    assert check_metric(ALL2).violated == 0


def test_single_violation_slack():
    g = np.array([[0, 10, 1], [10, 0, 1], [1, 1, 0]], dtype=float)
    rep = check_metric(g)
    assert rep.violated == 1
    assert rep.violation_list == [(0, 1, 2, 8.0)]
    d = rep.to_dict()
    assert d["violations"] == [{"i": 1, "j": 2, "k": 3, "slack": 8.0}]


def test_count_satisfied(fig1_graph):
    g = 2.0 * (np.ones((4, 4)) - np.eye(4))
    g[0, 1] = g[1, 0] = 5.0
    sys = build_constraint_matrix(fig1_graph)
    assert count_satisfied(g, sys) == 5


def test_emtp2_fractions():
    rng = np.random.default_rng(2)
    q = random_laplacian_q(6, rng)
    assert check_emtp2(theta_of(q)) == 1.0
    flipped = theta_of(-q)
    assert check_emtp2(flipped) == 0.0
    assert check_emtp2(gamma_to_theta(ALL2)) == 1.0


def test_emtp2_tree_model():
    q = np.zeros((4, 4))
    for i, j in [(0, 1), (1, 2), (2, 3)]:
        q[i, j] = q[j, i] = 1.0
    theta = gamma_to_theta(q_to_gamma(q))
    # tree zeros come back as roundoff of either sign; only the edges are strictly negative
    assert np.sum(theta[~np.eye(4, dtype=bool)] < -1e-9) == 6
