"""
Parameter algebra and surrogate likelihood functionals of the Hüsler–Reiss
family.

A d-variate model is parameterized either by its variogram matrix ``gamma``
(mean parameter, symmetric, zero diagonal, strictly conditionally negative
definite) or by the weighted adjacency matrix ``q`` of its precision matrix
``theta`` (natural parameter, ``theta = diag(q @ 1) - q``).

All functions take and return plain ``numpy`` arrays. Vertex indices are
0-based.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "DomainError",
    "ValidityReport",
    "DOMAIN_RTOL",
    "pair_indices",
    "vec",
    "unvec",
    "inner",
    "theta_from_q",
    "q_from_theta",
    "hyperplane_basis",
    "validate_variogram",
    "validate_q",
    "farris_transform",
    "inverse_farris",
    "gamma_to_theta",
    "gamma_to_q",
    "theta_to_gamma",
    "q_to_gamma",
    "spanning_tree_log_sum",
    "cayley_menger",
    "cayley_menger_logdet",
    "log_partition_q",
    "fenchel_conjugate",
    "surrogate_loglik",
    "surrogate_loglik_grad",
    "kl_divergence",
    "reciprocal_loglik",
]

# smallest/largest eigenvalue ratio below which a reduced matrix is
# treated as singular
DOMAIN_RTOL = 1e-10


class DomainError(ValueError):
    """A matrix lies outside the parameter space required by an operation."""


@dataclass(frozen=True)
class ValidityReport:
    symmetric: bool
    zero_diag: bool
    nonneg: bool
    strictly_cnd: bool
    min_eigenvalue: float
    max_eigenvalue: float

    @property
    def valid(self):
        return self.symmetric and self.zero_diag and self.nonneg and self.strictly_cnd


def _square(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def pair_indices(d):
    """Row/column arrays of the pairs ``i < j`` in lexicographic order."""
    return np.triu_indices(d, 1)


def vec(m):
    """Stack the strict upper triangle of ``m`` in lexicographic pair order."""
    m = np.asarray(m)
    return m[pair_indices(m.shape[0])]


def unvec(v, d):
    """Inverse of :func:`vec`: symmetric zero-diagonal ``d x d`` matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape != (d * (d - 1) // 2,):
        raise ValueError(f"expected vector of length {d * (d - 1) // 2}, got {v.shape}")
    m = np.zeros((d, d))
    iu = pair_indices(d)
    m[iu] = v
    m.T[iu] = v
    return m


def inner(a, b):
    """Upper-triangle inner product ``sum_{i<j} a_ij b_ij``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum(np.triu(a * b, 1)))


def theta_from_q(q):
    q = _square(q, "q")
    q = q - np.diag(np.diag(q))
    return np.diag(q.sum(axis=1)) - q


def q_from_theta(theta):
    theta = _square(theta, "theta")
    q = -theta.copy()
    np.fill_diagonal(q, 0.0)
    return q


def hyperplane_basis(d):
    """Orthonormal ``d x (d-1)`` basis of the hyperplane ``x'1 = 0``."""
    # Householder reflection mapping e_1 to the unit vector along 1
    u = np.full(d, 1.0 / np.sqrt(d))
    u[0] -= 1.0
    nrm = np.linalg.norm(u)
    h = np.eye(d)
    if nrm > 0:
        u /= nrm
        h -= 2.0 * np.outer(u, u)
    return h[:, 1:]


def _reduced_spectrum(m):
    d = m.shape[0]
    if d == 1:
        return np.array([np.inf])
    v = hyperplane_basis(d)
    return np.linalg.eigvalsh(v.T @ m @ v)


def _is_pd(eigs):
    top = eigs[-1]
    return bool(top > 0 and eigs[0] > DOMAIN_RTOL * top)


def validate_variogram(m, atol=1e-12):
    """Check membership of ``m`` in the variogram cone.

    ``strictly_cnd`` is decided on the spectrum of ``-m/2`` restricted to
    the hyperplane ``x'1 = 0``: the smallest eigenvalue must exceed
    ``DOMAIN_RTOL`` times the largest. The smallest eigenvalue is kept
    as a witness.
    """
    m = _square(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    tol = atol * scale
    symmetric = bool(np.allclose(m, m.T, rtol=0, atol=tol))
    zero_diag = bool(np.all(np.abs(np.diag(m)) <= tol))
    nonneg = bool(np.all(m[~np.eye(m.shape[0], dtype=bool)] > 0))
    eigs = _reduced_spectrum(-0.25 * (m + m.T))
    return ValidityReport(
        symmetric=symmetric,
        zero_diag=zero_diag,
        nonneg=nonneg,
        strictly_cnd=_is_pd(eigs),
        min_eigenvalue=float(eigs[0]),
        max_eigenvalue=float(eigs[-1]),
    )


def validate_q(q):
    """Return ``True`` when ``q`` lies in the natural parameter space."""
    q = _square(q, "q")
    if not np.allclose(q, q.T) or np.any(np.diag(q) != 0):
        return False
    return _is_pd(_reduced_spectrum(theta_from_q(q)))


def _require_variogram(gamma):
    gamma = _square(gamma, "gamma")
    rep = validate_variogram(gamma)
    if not (rep.symmetric and rep.zero_diag and rep.strictly_cnd):
        raise DomainError(
            "gamma is not a strictly conditionally negative definite variogram "
            f"(smallest reduced eigenvalue {rep.min_eigenvalue:.3g})"
        )
    return gamma


def _check_vertex(k, d):
    if not isinstance(k, (int, np.integer)) or not 0 <= k < d:
        raise ValueError(f"vertex index must be an integer in [0, {d}), got {k!r}")
    return int(k)


def farris_transform(gamma, k):
    """Covariance ``(gamma_ik + gamma_jk - gamma_ij)/2`` over ``i, j != k``."""
    gamma = _square(gamma, "gamma")
    d = gamma.shape[0]
    k = _check_vertex(k, d)
    keep = np.delete(np.arange(d), k)
    g = gamma[np.ix_(keep, keep)]
    gk = gamma[keep, k]
    return 0.5 * (gk[:, None] + gk[None, :] - g)


def inverse_farris(sigma, k):
    """Rebuild the ``d x d`` variogram from the anchor-``k`` covariance."""
    sigma = _square(sigma, "sigma")
    d = sigma.shape[0] + 1
    k = _check_vertex(k, d)
    dg = np.diag(sigma)
    inner_g = dg[:, None] + dg[None, :] - 2.0 * sigma
    keep = np.delete(np.arange(d), k)
    gamma = np.zeros((d, d))
    gamma[np.ix_(keep, keep)] = inner_g
    gamma[keep, k] = dg
    gamma[k, keep] = dg
    np.fill_diagonal(gamma, 0.0)
    return gamma


def gamma_to_theta(gamma, k=0):
    """Hüsler–Reiss precision matrix of ``gamma`` via the anchor-``k`` inverse.

    Raises
    ------
    DomainError
        If ``gamma`` is not strictly conditionally negative definite.
    """
    gamma = _require_variogram(gamma)
    d = gamma.shape[0]
    k = _check_vertex(k, d)
    sigma = farris_transform(gamma, k)
    try:
        cho = scipy.linalg.cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("Farris image is not positive definite") from exc
    theta_k = scipy.linalg.cho_solve(cho, np.eye(d - 1))
    theta_k = 0.5 * (theta_k + theta_k.T)
    keep = np.delete(np.arange(d), k)
    theta = np.zeros((d, d))
    theta[np.ix_(keep, keep)] = theta_k
    col = -theta_k.sum(axis=1)
    theta[keep, k] = col
    theta[k, keep] = col
    theta[k, k] = -col.sum()
    return theta


def gamma_to_q(gamma, k=0):
    return q_from_theta(gamma_to_theta(gamma, k))


def _shifted_cholesky(theta):
    # theta + 11'/d is positive definite iff theta is PD on the hyperplane
    d = theta.shape[0]
    try:
        return scipy.linalg.cho_factor(theta + 1.0 / d, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("q is not in the natural parameter space") from exc


def _gamma_from_sigma(s):
    dg = np.diag(s)
    gamma = dg[:, None] + dg[None, :] - 2.0 * s
    gamma = 0.5 * (gamma + gamma.T)
    np.fill_diagonal(gamma, 0.0)
    return gamma


def theta_to_gamma(theta):
    """Variogram of a Hüsler–Reiss precision matrix ``theta``.

    Uses ``(theta + 11'/d)^{-1} = theta^+ + 11'/d``; the rank-one term
    cancels in ``gamma_ij = s_ii + s_jj - 2 s_ij``.
    """
    theta = _square(theta, "theta")
    if not np.allclose(theta.sum(axis=1), 0.0, atol=1e-8 * max(1.0, np.abs(theta).max())):
        raise DomainError("theta must have zero row sums")
    d = theta.shape[0]
    cho = _shifted_cholesky(theta)
    s = scipy.linalg.cho_solve(cho, np.eye(d))
    return _gamma_from_sigma(s)


def q_to_gamma(q):
    return theta_to_gamma(theta_from_q(q))


def spanning_tree_log_sum(q):
    """Log of the spanning-tree polynomial ``sum_T prod_{ij in T} q_ij``.

    Computed as the log-determinant of ``theta`` with its first row and
    column removed (matrix-tree theorem).
    """
    q = _square(q, "q")
    d = q.shape[0]
    if d < 2:
        raise ValueError("dimension must be at least 2")
    theta = theta_from_q(q)
    try:
        c = scipy.linalg.cholesky(theta[1:, 1:], lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("q is not in the natural parameter space") from exc
    # pivots bound the smallest eigenvalue from above, so a roundoff-sized
    # pivot means a singular reduced theta (disconnected support)
    pivots = np.diag(c) ** 2
    if pivots.min() <= DOMAIN_RTOL * max(np.max(np.diag(theta)), 0.0):
        raise DomainError("q is not in the natural parameter space")
    return float(2.0 * np.sum(np.log(np.diag(c))))


def cayley_menger(gamma):
    gamma = _square(gamma, "gamma")
    d = gamma.shape[0]
    one = np.ones((d, 1))
    return np.block([[-0.5 * gamma, one], [-one.T, np.zeros((1, 1))]])


def cayley_menger_logdet(gamma):
    """``log |det CM(gamma)|``; equals ``-spanning_tree_log_sum(gamma_to_q(gamma))``."""
    gamma = _require_variogram(gamma)
    sign, logdet = np.linalg.slogdet(cayley_menger(gamma))
    if sign <= 0:
        # never observed on valid variograms; det CM equals det of any Farris image
        raise DomainError(f"Cayley-Menger determinant has sign {sign}")
    return float(logdet)


def log_partition_q(q):
    return -0.5 * spanning_tree_log_sum(q)


def fenchel_conjugate(gamma):
    d = np.shape(gamma)[0]
    return -(d - 1) / 2.0 - 0.5 * cayley_menger_logdet(gamma)


def surrogate_loglik(q, gamma_bar):
    """Surrogate log-likelihood ``0.5*log tau(q) - 0.5*<gamma_bar, q>``."""
    q = _square(q, "q")
    gamma_bar = _square(gamma_bar, "gamma_bar")
    if q.shape != gamma_bar.shape:
        raise ValueError(f"dimension mismatch {q.shape} vs {gamma_bar.shape}")
    return 0.5 * spanning_tree_log_sum(q) - 0.5 * inner(gamma_bar, q)


def surrogate_loglik_grad(q, gamma_bar):
    """Gradient w.r.t. the pair entries of ``q``: ``(gamma(q) - gamma_bar)/2``."""
    return 0.5 * (q_to_gamma(q) - np.asarray(gamma_bar, dtype=float))


def kl_divergence(gamma1, q2):
    """Surrogate KL divergence between mean parameter ``gamma1`` and natural parameter ``q2``."""
    gamma1 = _square(gamma1, "gamma1")
    q2 = _square(q2, "q2")
    if gamma1.shape != q2.shape:
        raise ValueError(f"dimension mismatch {gamma1.shape} vs {q2.shape}")
    return 0.5 * inner(gamma1, q2) + fenchel_conjugate(gamma1) + log_partition_q(q2)


def reciprocal_loglik(gamma, q_hat):
    """Reciprocal surrogate likelihood ``log det CM(gamma) - <gamma, q_hat>``.

    Its negative is the objective minimized by the projection step.
    """
    gamma = _square(gamma, "gamma")
    q_hat = _square(q_hat, "q_hat")
    if gamma.shape != q_hat.shape:
        raise ValueError(f"dimension mismatch {gamma.shape} vs {q_hat.shape}")
    return cayley_menger_logdet(gamma) - inner(gamma, q_hat)
