"""
Margin standardization, threshold exceedances, the empirical variogram and
exploratory diagnostics (triangle-inequality and EMTP2 checks).
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import rankdata

from .graph import build_constraint_matrix

__all__ = [
    "ExceedanceDataset",
    "EmpiricalVariogram",
    "DiagnosticsReport",
    "VIOLATION_RTOL",
    "to_exponential_margins",
    "select_exceedances",
    "sample_variogram",
    "empirical_variogram",
    "check_metric",
    "check_emtp2",
    "count_satisfied",
]

logger = logging.getLogger(__name__)

# an inequality g <= 0 counts as violated when g > VIOLATION_RTOL * max(gamma)
VIOLATION_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ExceedanceDataset:
    values: np.ndarray
    exceedance_sets: tuple
    threshold: float = 0.0

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class EmpiricalVariogram:
    matrix: np.ndarray
    per_anchor: np.ndarray
    anchor_counts: np.ndarray

    @property
    def zero_anchors(self):
        """Anchors with fewer than two exceedances (contribute a zero matrix)."""
        return [int(k) for k in np.flatnonzero(self.anchor_counts < 2)]


@dataclass
class DiagnosticsReport:
    total_inequalities: int
    violated: int
    violation_list: list = field(default_factory=list)
    emtp2_nonpositive_fraction: float = None

    def to_dict(self):
        return {
            "total_inequalities": self.total_inequalities,
            "violated": self.violated,
            "satisfied_fraction": (
                1.0 - self.violated / self.total_inequalities if self.total_inequalities else 1.0
            ),
            # 1-based labels, orientation (i, j, k) means gamma_ij <= gamma_ik + gamma_jk
            "violations": [
                {"i": i + 1, "j": j + 1, "k": k + 1, "slack": s}
                for i, j, k, s in self.violation_list
            ],
            "emtp2_nonpositive_fraction": self.emtp2_nonpositive_fraction,
        }


def to_exponential_margins(raw):
    """Rank-transform each column to the standard exponential scale.

    ``x -> -log(1 - r/(n+1))`` with ``r`` the within-column average rank.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {raw.shape}")
    n = raw.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    const = np.flatnonzero(np.all(raw == raw[0], axis=0))
    if len(const):
        raise ValueError(f"column {int(const[0])} is constant")
    ranks = rankdata(raw, method="average", axis=0)
    return -np.log1p(-ranks / (n + 1))


def select_exceedances(exp_data, p):
    """Rows exceeding the marginal exponential ``p``-quantile in some coordinate.

    Each coordinate is thresholded at ``u = -log(1 - p)``; retained rows are
    returned shifted by ``-u``.
    """
    exp_data = np.asarray(exp_data, dtype=float)
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    u = -np.log1p(-p)
    keep = exp_data.max(axis=1) > u
    if keep.sum() < 2:
        raise ValueError(f"only {int(keep.sum())} rows exceed the threshold at p={p}")
    y = exp_data[keep] - u
    sets = tuple(np.flatnonzero(y[:, k] > 0) for k in range(y.shape[1]))
    return ExceedanceDataset(values=y, exceedance_sets=sets, threshold=float(u))


def sample_variogram(x):
    """Mean squared coordinate differences ``(1/n) sum_l (x_li - x_lj)^2``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    c = x.T @ x / n
    dg = np.diag(c)
    g = dg[:, None] + dg[None, :] - 2.0 * c
    g = 0.5 * (g + g.T)
    np.fill_diagonal(g, 0.0)
    return np.maximum(g, 0.0)


def empirical_variogram(ds):
    """Average over anchors of the centered per-anchor sample variograms."""
    y = ds.values
    d = ds.d
    per = np.zeros((d, d, d))
    counts = np.array([len(s) for s in ds.exceedance_sets])
    if np.all(counts < 2):
        raise ValueError("no coordinate has two or more exceedances")
    for k, idx in enumerate(ds.exceedance_sets):
        if len(idx) < 2:
            continue
        z = y[idx]
        per[k] = sample_variogram(z - z.mean(axis=0))
    low = np.flatnonzero(counts < 2)
    if len(low):
        logger.warning("anchors %s have fewer than 2 exceedances; using zero matrices", low.tolist())
    gbar = per.sum(axis=0) / d
    return EmpiricalVariogram(matrix=gbar, per_anchor=per, anchor_counts=counts)


def _violation_tol(gamma):
    return VIOLATION_RTOL * max(float(np.max(gamma)), 0.0)


def check_metric(gamma, graph=None):
    """Evaluate all triangle inequalities of ``graph`` (complete graph if ``None``)."""
    gamma = np.asarray(gamma, dtype=float)
    d = gamma.shape[0]
    if graph is None or graph == "complete":
        tri = np.array(list(combinations(range(d), 3)), dtype=np.intp).reshape(-1, 3)
        i, j, k = tri.T
        orient = np.stack(
            [np.stack([i, j, k], 1), np.stack([i, k, j], 1), np.stack([j, k, i], 1)], axis=1
        ).reshape(-1, 3)
    else:
        orient = build_constraint_matrix(graph).orientations
    g = gamma[orient[:, 0], orient[:, 1]] - gamma[orient[:, 0], orient[:, 2]] - gamma[orient[:, 1], orient[:, 2]]
    bad = np.flatnonzero(g > _violation_tol(gamma))
    violations = [(int(a), int(b), int(c), float(s)) for (a, b, c), s in zip(orient[bad], g[bad])]
    return DiagnosticsReport(total_inequalities=len(g), violated=len(bad), violation_list=violations)


def count_satisfied(gamma, system):
    """Number of constraints of ``system`` that hold at ``gamma``."""
    g = system.evaluate(gamma)
    return int(np.sum(g <= _violation_tol(gamma)))


def check_emtp2(theta):
    """Fraction of off-diagonal entries of ``theta`` that are non-positive."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    if d < 2:
        return 1.0
    off = theta[~np.eye(d, dtype=bool)]
    return float(np.mean(off <= 0))
