"""
Projection onto the local-metric cone through its dual problem.

The primal problem minimizes ``<gamma, q_hat> - log det CM(gamma)`` subject
to the triangle inequalities ``g(gamma) <= 0`` of a graph. Its dual

    maximize_{eta >= 0}  log tau(q_hat + A eta) + (d - 1)

is smooth and concave with gradient ``g(gamma(eta))``, where ``gamma(eta)``
is the variogram of ``q(eta) = q_hat + A eta``. Optimality is certified by
the KKT conditions: primal feasibility, ``eta >= 0`` and complementary
slackness.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .graph import TriangleConstraintSystem
from .hr_core import DomainError, inner, theta_from_q
from .solver_s1 import ConvergenceError
from .variogram import VIOLATION_RTOL

__all__ = [
    "KKTResiduals",
    "DualState",
    "S2Estimate",
    "q_of_eta",
    "dual_objective",
    "dual_gradient",
    "duality_gap",
    "kkt_certificate",
    "solve_dual",
    "default_tolerances",
]

logger = logging.getLogger(__name__)

ARMIJO = 1e-4


@dataclass(frozen=True)
class KKTResiduals:
    primal: float
    dual: float
    complementarity: float
    tol: float

    @property
    def ok(self):
        return self.primal <= self.tol and self.dual >= 0.0 and self.complementarity <= self.tol

    def to_dict(self):
        return {
            "primal": self.primal,
            "dual": self.dual,
            "complementarity": self.complementarity,
            "tol": self.tol,
            "pass": self.ok,
        }


@dataclass(frozen=True, eq=False)
class DualState:
    eta: np.ndarray
    q_eta: np.ndarray
    gamma_eta: np.ndarray
    objective: float
    gradient: np.ndarray
    gap: float
    # factor of theta(eta) + 11'/d, reused by the Newton direction
    s: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True, eq=False)
class S2Estimate:
    gamma_check: np.ndarray
    q_check: np.ndarray
    eta_check: np.ndarray
    gap: float
    kkt: KKTResiduals
    iterations: int
    objective: float = float("nan")
    objective_trace: tuple = ()
    seconds: float = 0.0
    already_feasible: bool = False

    def to_dict(self, trace=False):
        out = {
            "gamma": self.gamma_check.tolist(),
            "q": self.q_check.tolist(),
            "eta": self.eta_check.tolist(),
            "gap": self.gap,
            "kkt": self.kkt.to_dict(),
            "iterations": self.iterations,
            "objective": self.objective,
            "already_feasible": self.already_feasible,
        }
        if trace:
            out["objective_trace"] = list(self.objective_trace)
        return out


def _check_eta(eta, system):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (system.m,):
        raise ValueError(f"eta must have length {system.m}, got shape {eta.shape}")
    return eta


def q_of_eta(eta, q_hat, system):
    """``q_hat + A eta`` as a symmetric matrix."""
    eta = _check_eta(eta, system)
    q_hat = np.asarray(q_hat, dtype=float)
    if system.m == 0:
        return q_hat.copy()
    return q_hat + system.apply_matrix(eta)


def _state(eta, q_hat, system):
    q = q_of_eta(eta, q_hat, system)
    d = q.shape[0]
    theta = theta_from_q(q)
    try:
        c, _ = scipy.linalg.cho_factor(theta[1:, 1:], lower=True)
        cho = scipy.linalg.cho_factor(theta + 1.0 / d, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("q(eta) left the natural parameter space") from exc
    log_tau = 2.0 * float(np.sum(np.log(np.diag(c))))
    s = scipy.linalg.cho_solve(cho, np.eye(d))
    dg = np.diag(s)
    gamma = dg[:, None] + dg[None, :] - 2.0 * s
    gamma = 0.5 * (gamma + gamma.T)
    np.fill_diagonal(gamma, 0.0)
    grad = system.evaluate(gamma)
    return DualState(
        eta=eta,
        q_eta=q,
        gamma_eta=gamma,
        objective=log_tau + (d - 1),
        gradient=grad,
        gap=duality_gap(gamma, q_hat),
        s=s,
    )


def dual_objective(eta, q_hat, system):
    """``log tau(q(eta)) + (d - 1)``; raises :class:`DomainError` outside the domain."""
    return _state(_check_eta(eta, system), q_hat, system).objective


def dual_gradient(eta, q_hat, system):
    """``A' vec(gamma(eta))``, i.e. the constraint values at ``gamma(eta)``."""
    return _state(_check_eta(eta, system), q_hat, system).gradient


def duality_gap(gamma, q_hat):
    """``<gamma, q_hat> - (d - 1)``."""
    gamma = np.asarray(gamma, dtype=float)
    q_hat = np.asarray(q_hat, dtype=float)
    if gamma.shape != q_hat.shape:
        raise ValueError(f"dimension mismatch {gamma.shape} vs {q_hat.shape}")
    return inner(gamma, q_hat) - (gamma.shape[0] - 1)


def default_tolerances(gamma, d):
    """``(tol_kkt, tol_gap) = (1e-7 * max(gamma), 1e-6 * (d - 1))``."""
    return 1e-7 * float(np.max(gamma)), 1e-6 * (d - 1)


def kkt_certificate(state, system=None, tol_kkt=None):
    """KKT residual triple of a dual state or S2 estimate.

    ``primal`` is the largest constraint value, ``dual`` the smallest
    multiplier and ``complementarity`` is ``|eta' g|``.
    """
    if isinstance(state, S2Estimate):
        eta, gamma = state.eta_check, state.gamma_check
    else:
        eta, gamma = state.eta, state.gamma_eta
    if system is None:
        g = state.gradient if isinstance(state, DualState) else None
        if g is None:
            raise ValueError("a constraint system is required for S2Estimate input")
    else:
        g = system.evaluate(gamma)
    if tol_kkt is None:
        tol_kkt = default_tolerances(gamma, gamma.shape[0])[0]
    eta = np.asarray(eta, dtype=float)
    if len(g) == 0:
        return KKTResiduals(primal=0.0, dual=0.0, complementarity=0.0, tol=tol_kkt)
    return KKTResiduals(
        primal=float(np.max(g)),
        dual=float(np.min(eta)),
        complementarity=float(abs(np.dot(eta, g))),
        tol=tol_kkt,
    )


class _PairHessian:
    """Hessian of the dual objective in ``eta``: ``A' H A`` with
    ``H_pq = -(u_p' S u_q)^2`` over the pairs touched by triangles."""

    def __init__(self, system):
        a = system.matrix.tocsr()
        touched = np.unique(np.concatenate([system.pos_rows, system.neg_rows.ravel()]))
        self.a = a[touched].toarray()
        iu = np.triu_indices(system.d, 1)
        self.pi = iu[0][touched]
        self.pj = iu[1][touched]

    def __call__(self, s):
        pi, pj = self.pi, self.pj
        m = s[np.ix_(pi, pi)] + s[np.ix_(pj, pj)] - s[np.ix_(pi, pj)] - s[np.ix_(pj, pi)]
        hp = -(m ** 2)
        return self.a.T @ hp @ self.a


def _newton_direction(hess, state, free):
    g = state.gradient
    p = g.copy()
    if not free.any():
        return p
    h = -hess(state.s)[np.ix_(free, free)]
    gf = g[free]
    mu = 1e-10 * max(1.0, float(np.max(np.diag(h))))
    for _ in range(12):
        try:
            cho = scipy.linalg.cho_factor(h + mu * np.eye(len(h)), lower=True)
            p[free] = scipy.linalg.cho_solve(cho, gf)
            return p
        except np.linalg.LinAlgError:
            mu *= 100.0
    p[free] = gf
    return p


def solve_dual(
    q_hat,
    system,
    tol_kkt=None,
    tol_gap=None,
    max_iter=5000,
    method="newton",
    gamma_hat=None,
    trace=False,
):
    """Maximize the dual of the projection step over ``eta >= 0``.

    Parameters
    ----------
    q_hat : ndarray, shape (d, d)
        Step-one weighted adjacency matrix.
    system : TriangleConstraintSystem
        Constraints built from the graph that supports ``q_hat``.
    tol_kkt, tol_gap : float, optional
        Stopping tolerances; default to ``1e-7 * max(gamma)`` and
        ``1e-6 * (d - 1)``.
    max_iter : int
        Iteration cap.
    method : {"newton", "gradient"}
        ``"gradient"`` is projected gradient ascent with a Barzilai-Borwein
        trial step; ``"newton"`` scales the free coordinates by the inverse
        Hessian. Both project with ``max(0, .)``, backtrack by halving with
        Armijo constant 1e-4 and reject steps outside the domain.
    gamma_hat : ndarray, optional
        Variogram of ``q_hat`` if already known (returned verbatim when no
        constraint is violated).
    trace : bool
        Record the dual objective at each accepted iterate.

    Raises
    ------
    ConvergenceError
        When the KKT and gap tolerances are not met within ``max_iter``.
    """
    if not isinstance(system, TriangleConstraintSystem):
        raise TypeError("system must be a TriangleConstraintSystem")
    if method not in ("newton", "gradient"):
        raise ValueError(f"unknown method {method!r}")
    q_hat = np.asarray(q_hat, dtype=float)
    d = q_hat.shape[0]
    if q_hat.shape != (system.d, system.d):
        raise ValueError(f"q_hat has shape {q_hat.shape}, constraint system has d={system.d}")
    start = time.perf_counter()
    m = system.m
    eta = np.zeros(m)
    state = _state(eta, q_hat, system)
    if gamma_hat is None:
        gamma_hat = state.gamma_eta
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    kkt_scale = tol_kkt
    g0 = system.evaluate(gamma_hat)
    feasible = m == 0 or bool(np.all(g0 <= VIOLATION_RTOL * float(np.max(gamma_hat))))
    if feasible:
        kkt = kkt_certificate(
            DualState(eta, q_hat, gamma_hat, state.objective, g0, 0.0), tol_kkt=_tol(tol_kkt, gamma_hat)
        )
        return S2Estimate(
            gamma_check=gamma_hat.copy(),
            q_check=q_hat.copy(),
            eta_check=eta,
            gap=duality_gap(gamma_hat, q_hat),
            kkt=kkt,
            iterations=0,
            objective=state.objective,
            objective_trace=(state.objective,) if trace else (),
            seconds=time.perf_counter() - start,
            already_feasible=True,
        )

    hess = _PairHessian(system) if method == "newton" else None
    history = [state.objective] if trace else None
    alpha = 1.0 / max(1.0, float(np.max(np.abs(state.gradient))))
    it = 0
    while True:
        tk = _tol(kkt_scale, state.gamma_eta)
        tg = 1e-6 * (d - 1) if tol_gap is None else tol_gap
        kkt = kkt_certificate(state, tol_kkt=tk)
        if kkt.ok and abs(state.gap) <= tg:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"S2 did not converge in {max_iter} iterations",
                residuals={**kkt.to_dict(), "gap": state.gap},
                iterations=it,
            )
        g = state.gradient
        if method == "newton":
            # coordinates held at the bound: near zero with the gradient pushing outward
            w = float(np.linalg.norm(state.eta - np.maximum(0.0, state.eta + g)))
            eps = min(1e-3, w)
            held = (state.eta <= eps) & (g < 0)
            direction = _newton_direction(hess, state, ~held)
            t = 1.0
        else:
            held = np.zeros(m, dtype=bool)
            direction = g
            t = alpha
        new = None
        for _ in range(60):
            eta_new = np.maximum(0.0, state.eta + t * direction)
            step = eta_new - state.eta
            try:
                cand = _state(eta_new, q_hat, system)
            except DomainError:
                t *= 0.5
                continue
            predicted = ARMIJO * float(np.dot(g, step))
            slack = 1e-13 * (1.0 + abs(state.objective))
            if cand.objective - state.objective >= predicted - slack:
                new = cand
                break
            t *= 0.5
        if new is None:
            raise ConvergenceError(
                "S2 line search stalled",
                residuals={**kkt.to_dict(), "gap": state.gap},
                iterations=it,
            )
        if method == "gradient":
            s_vec = new.eta - state.eta
            y_vec = new.gradient - g
            sy = float(np.dot(s_vec, y_vec))
            alpha = float(np.dot(s_vec, s_vec)) / -sy if sy < 0 else 1e3 * alpha
            alpha = min(max(alpha, 1e-12), 1e12)
        state = new
        if trace:
            history.append(state.objective)
        it += 1

    return S2Estimate(
        gamma_check=state.gamma_eta,
        q_check=state.q_eta,
        eta_check=state.eta,
        gap=state.gap,
        kkt=kkt,
        iterations=it,
        objective=state.objective,
        objective_trace=tuple(history) if trace else (),
        seconds=time.perf_counter() - start,
    )


def _tol(tol_kkt, gamma):
    return 1e-7 * float(np.max(gamma)) if tol_kkt is None else tol_kkt
