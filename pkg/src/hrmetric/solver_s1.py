"""
Graph-constrained surrogate maximum likelihood (variogram matrix completion).

Maximizes ``log tau(Q) - <gamma_bar, Q>`` over weighted adjacency matrices
``Q`` supported on the edges of a connected graph. At the optimum the
fitted variogram matches ``gamma_bar`` on every edge and ``Q`` vanishes off
the edges.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hr_core import (
    DomainError,
    gamma_to_q,
    q_to_gamma,
    inner,
    spanning_tree_log_sum,
    theta_from_q,
    validate_variogram,
)
from .graph import UndirectedGraph, build_graph

__all__ = [
    "ConvergenceError",
    "S1Estimate",
    "S1Certificate",
    "edge_state",
    "fit_s1",
    "s1_optimality_certificate",
    "s1_objective",
]

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before meeting its tolerances."""

    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class S1Estimate:
    gamma_hat: np.ndarray
    q_hat: np.ndarray
    residual: float
    iterations: int
    objective_trace: tuple = ()

    def to_dict(self):
        return {
            "gamma": self.gamma_hat.tolist(),
            "q": self.q_hat.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class S1Certificate:
    edge_residual: float
    off_edge_q_norm: float
    strictly_cnd: bool
    tol: float
    # max |gamma(q_hat) - gamma_hat|, relative to max(1, max gamma_hat)
    consistency: float = 0.0

    @property
    def ok(self):
        return (
            self.edge_residual <= self.tol
            and self.off_edge_q_norm == 0.0
            and self.strictly_cnd
            and self.consistency <= self.tol
        )

    def to_dict(self):
        return {
            "edge_residual": self.edge_residual,
            "off_edge_q_norm": self.off_edge_q_norm,
            "strictly_cnd": self.strictly_cnd,
            "consistency": self.consistency,
            "pass": self.ok,
        }


def _q_matrix(weights, ei, ej, d):
    q = np.zeros((d, d))
    q[ei, ej] = weights
    q[ej, ei] = weights
    return q


def edge_state(weights, ei, ej, d):
    """Objective pieces at edge weights ``weights``.

    Returns ``(log_tau, S)`` with ``S = (theta + 11'/d)^{-1}``, or raises
    :class:`DomainError` when the weights leave the natural parameter space.
    """
    theta = theta_from_q(_q_matrix(weights, ei, ej, d))
    try:
        c, _ = scipy.linalg.cho_factor(theta[1:, 1:], lower=True)
        cho = scipy.linalg.cho_factor(theta + 1.0 / d, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("edge weights leave the natural parameter space") from exc
    log_tau = 2.0 * np.sum(np.log(np.diag(c)))
    s = scipy.linalg.cho_solve(cho, np.eye(d))
    return log_tau, s


def _gamma_from_s(s):
    dg = np.diag(s)
    g = dg[:, None] + dg[None, :] - 2.0 * s
    g = 0.5 * (g + g.T)
    np.fill_diagonal(g, 0.0)
    return g


def _edge_hessian(s, ei, ej):
    # d gamma_e / d q_f = -((u_e' S u_f))^2 with u_e = e_i - e_j
    m = s[np.ix_(ei, ei)] + s[np.ix_(ej, ej)] - s[np.ix_(ei, ej)] - s[np.ix_(ej, ei)]
    return -(m ** 2)


def fit_s1(gamma_bar, graph, tol=1e-8, max_iter=5000, method="newton", q0=None, trace=False):
    """Surrogate MLE of a Hüsler–Reiss graphical model on ``graph``.

    Parameters
    ----------
    gamma_bar : ndarray, shape (d, d)
        Empirical variogram; only its entries on the edges of ``graph`` are used.
    graph : UndirectedGraph
        Connected graph on ``d`` vertices.
    tol : float
        Target for the largest edge residual ``|gamma_hat_ij - gamma_bar_ij|``.
    max_iter : int
        Iteration cap.
    method : {"newton", "gradient"}
        Ascent direction. Both use Armijo backtracking by halving (constant
        1e-4) and reject steps that leave the parameter space. Newton
        starts each search at 1, gradient at a Barzilai-Borwein step.
    q0 : ndarray, optional
        Starting weighted adjacency matrix supported on the edges. Defaults
        to ``1 / gamma_bar`` on each edge.
    trace : bool
        Keep the objective value of every accepted iterate.

    Returns
    -------
    S1Estimate

    Raises
    ------
    ConvergenceError
        If the edge residual is still above ``tol`` after ``max_iter``
        iterations or the line search stalls.
    """
    gamma_bar = np.asarray(gamma_bar, dtype=float)
    if not isinstance(graph, UndirectedGraph):
        raise TypeError("graph must be an UndirectedGraph")
    graph = build_graph(graph.d, graph.edges)
    d = graph.d
    if gamma_bar.shape != (d, d):
        raise ValueError(f"gamma_bar has shape {gamma_bar.shape}, graph has {d} vertices")
    if method not in ("newton", "gradient"):
        raise ValueError(f"unknown method {method!r}")
    e = graph.edge_array()
    ei, ej = e[:, 0], e[:, 1]
    target = gamma_bar[ei, ej]
    if np.any(target <= 0):
        raise ValueError("gamma_bar must be positive on every edge")

    if graph.is_complete:
        # no free entries: the completion is gamma_bar itself
        q_hat = gamma_to_q(gamma_bar)
        return S1Estimate(gamma_hat=gamma_bar.copy(), q_hat=q_hat, residual=0.0, iterations=0)

    if q0 is None:
        w = 1.0 / target
    else:
        q0 = np.asarray(q0, dtype=float)
        w = q0[ei, ej].copy()

    def objective(log_tau, weights):
        return log_tau - float(np.dot(target, weights))

    log_tau, s = edge_state(w, ei, ej, d)
    f = objective(log_tau, w)
    history = [f] if trace else None
    it = 0
    resid = np.inf
    alpha = 1.0
    while True:
        gamma = _gamma_from_s(s)
        grad = gamma[ei, ej] - target
        resid = float(np.max(np.abs(grad)))
        if resid < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"S1 did not converge in {max_iter} iterations (edge residual {resid:.3e})",
                residuals={"edge_residual": resid},
                iterations=it,
            )
        if method == "newton":
            h = _edge_hessian(s, ei, ej)
            try:
                cho = scipy.linalg.cho_factor(-h, lower=True)
                step = scipy.linalg.cho_solve(cho, grad)
            except np.linalg.LinAlgError:
                step = grad
        else:
            step = grad
        slope = float(np.dot(grad, step))
        t = 1.0 if method == "newton" else alpha
        for _ in range(60):
            w_new = w + t * step
            try:
                lt_new, s_new = edge_state(w_new, ei, ej, d)
            except DomainError:
                t *= 0.5
                continue
            f_new = objective(lt_new, w_new)
            # slack absorbs roundoff once the residual is near machine precision
            if f_new - f >= 1e-4 * t * slope - 1e-13 * (1.0 + abs(f)):
                break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"S1 line search stalled (edge residual {resid:.3e})",
                residuals={"edge_residual": resid},
                iterations=it,
            )
        if method == "gradient":
            g_new = _gamma_from_s(s_new)[ei, ej] - target
            sv, yv = w_new - w, g_new - grad
            sy = float(np.dot(sv, yv))
            alpha = float(np.dot(sv, sv)) / -sy if sy < 0 else 2.0 * t
            alpha = min(max(alpha, 1e-12), 1e12)
        w, s, f = w_new, s_new, f_new
        if trace:
            history.append(f)
        it += 1

    q_hat = _q_matrix(w, ei, ej, d)
    return S1Estimate(
        gamma_hat=gamma,
        q_hat=q_hat,
        residual=resid,
        iterations=it,
        objective_trace=tuple(history) if trace else (),
    )


def s1_optimality_certificate(est, gamma_bar, graph, tol=1e-7):
    """Check the completion optimality system for an S1 estimate.

    The edge residual is measured on ``est.gamma_hat``; the off-edge norm
    of ``est.q_hat`` must be exactly zero, ``gamma_hat`` strictly
    conditionally negative definite, and ``gamma_hat`` must be the variogram
    of ``q_hat`` (so a completion that is not the Markov one fails).
    """
    gamma_bar = np.asarray(gamma_bar, dtype=float)
    adj = graph.adjacency
    off = ~adj & ~np.eye(graph.d, dtype=bool)
    e = graph.edge_array()
    edge_res = float(np.max(np.abs(est.gamma_hat[e[:, 0], e[:, 1]] - gamma_bar[e[:, 0], e[:, 1]]))) if len(e) else 0.0
    off_norm = float(np.max(np.abs(est.q_hat[off]))) if off.any() else 0.0
    try:
        implied = q_to_gamma(est.q_hat)
        scale = max(1.0, float(np.max(np.abs(est.gamma_hat))))
        consistency = float(np.max(np.abs(implied - est.gamma_hat))) / scale
    except DomainError:
        consistency = float("inf")
    return S1Certificate(
        edge_residual=edge_res,
        off_edge_q_norm=off_norm,
        strictly_cnd=validate_variogram(est.gamma_hat).valid,
        tol=tol,
        consistency=consistency,
    )


def s1_objective(q, gamma_bar):
    """Value of ``<gamma_bar, q> - log tau(q)`` (minimized by step S1)."""
    return inner(gamma_bar, q) - spanning_tree_log_sum(q)
