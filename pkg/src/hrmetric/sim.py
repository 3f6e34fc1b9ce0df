"""
Synthetic variograms, extremal-function sampling and the benchmark harness
for the two-step estimator.
"""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import build_constraint_matrix, random_connected_graph
from .hr_core import farris_transform, validate_variogram
from .solver_s1 import ConvergenceError, fit_s1
from .solver_s2 import kkt_certificate, solve_dual
from .variogram import count_satisfied

__all__ = [
    "DEFAULT_DENSITY",
    "ReplicateRecord",
    "BenchmarkReport",
    "sample_sphere_variogram",
    "sample_extremal_function",
    "run_replicate",
    "run_benchmark",
]

logger = logging.getLogger(__name__)

# edge fraction reproducing the average dual dimensions reported for d = 50, 100
DEFAULT_DENSITY = 0.2


def sample_sphere_variogram(d, seed=None, max_tries=100):
    """Squared Euclidean distances of ``d`` uniform points on the unit sphere in ``R^d``.

    Points are normalized standard Gaussian vectors. A degenerate draw is
    resampled with the next seed.
    """
    d = int(d)
    if d < 3:
        raise ValueError(f"need d >= 3, got {d}")
    base = seed
    for attempt in range(max_tries):
        s = None if base is None else base + attempt
        rng = np.random.default_rng(s)
        x = rng.standard_normal((d, d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        sq = np.sum(x * x, axis=1)
        gamma = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
        gamma = 0.5 * (gamma + gamma.T)
        np.fill_diagonal(gamma, 0.0)
        if validate_variogram(gamma).valid:
            return gamma
        logger.info("degenerate sphere configuration for seed %s; resampling", s)
    raise RuntimeError(f"no valid sphere variogram after {max_tries} draws")


def sample_extremal_function(gamma, k, n, seed=None):
    """Draw ``n`` rows of the anchor-``k`` extremal function.

    Coordinates other than ``k`` are Gaussian with covariance equal to the
    Farris image at ``k`` and mean ``-diag/2``; column ``k`` is zero.
    """
    gamma = np.asarray(gamma, dtype=float)
    d = gamma.shape[0]
    sigma = farris_transform(gamma, k)
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((int(n), d - 1)) @ chol.T - 0.5 * np.diag(sigma)
    out = np.zeros((int(n), d))
    out[:, np.arange(d) != k] = z
    return out


@dataclass
class ReplicateRecord:
    d: int
    replicate: int
    seed: int
    n_edges: int
    dual_dimension: int
    start_proportion: float = float("nan")
    gap: float = float("nan")
    time_seconds: float = float("nan")
    iterations: int = 0
    kkt_primal: float = float("nan")
    kkt_dual: float = float("nan")
    kkt_complementarity: float = float("nan")
    kkt_pass: bool = False
    error: str = ""


@dataclass
class BenchmarkReport:
    d: int
    n_sim: int
    density: float
    seed: int
    records: list = field(default_factory=list)

    def _ok(self):
        return [r for r in self.records if not r.error]

    @property
    def mean_dual_dimension(self):
        return float(np.mean([r.dual_dimension for r in self.records]))

    @property
    def mean_start_proportion(self):
        return float(np.mean([r.start_proportion for r in self._ok()]))

    @property
    def mean_gap(self):
        return float(np.mean([r.gap for r in self._ok()]))

    @property
    def mean_abs_gap(self):
        return float(np.mean([abs(r.gap) for r in self._ok()]))

    @property
    def mean_time_seconds(self):
        return float(np.mean([r.time_seconds for r in self._ok()]))

    @property
    def n_errors(self):
        return sum(1 for r in self.records if r.error)

    def summary(self):
        return {
            "dual_dimension": self.mean_dual_dimension,
            "start_proportion": self.mean_start_proportion,
            "duality_gap": self.mean_gap,
            "time_seconds": self.mean_time_seconds,
        }

    def rows(self):
        return [asdict(r) for r in self.records]


def run_replicate(d, replicate, seed, density=DEFAULT_DENSITY, method="newton"):
    """One benchmark replicate; solver failures are recorded, not raised."""
    rseed = int(seed) + int(replicate)
    ss = np.random.SeedSequence(rseed)
    gseed, vseed = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    gamma_bar = sample_sphere_variogram(d, vseed)
    graph = random_connected_graph(d, density, gseed)
    system = build_constraint_matrix(graph)
    rec = ReplicateRecord(
        d=d, replicate=replicate, seed=rseed, n_edges=graph.n_edges, dual_dimension=system.m
    )
    try:
        s1 = fit_s1(gamma_bar, graph)
        rec.start_proportion = 100.0 * count_satisfied(s1.gamma_hat, system) / system.m
        t0 = time.perf_counter()
        s2 = solve_dual(s1.q_hat, system, gamma_hat=s1.gamma_hat, method=method)
        rec.time_seconds = time.perf_counter() - t0
    except ConvergenceError as exc:
        rec.error = str(exc)
        return rec
    kkt = kkt_certificate(s2, system)
    rec.gap = float(s2.gap)
    rec.iterations = s2.iterations
    rec.kkt_primal = kkt.primal
    rec.kkt_dual = kkt.dual
    rec.kkt_complementarity = kkt.complementarity
    rec.kkt_pass = kkt.ok
    return rec


def run_benchmark(d_list, n_sim, density=DEFAULT_DENSITY, seed=0, method="newton", workers=1):
    """Run ``n_sim`` replicates per dimension in ``d_list``.

    Replicate ``r`` uses seed ``seed + r``, so results do not depend on
    scheduling when ``workers > 1``.
    """
    reports = []
    for d in d_list:
        d = int(d)
        if d < 3:
            raise ValueError(f"need d >= 3, got {d}")
        args = [(d, r, seed, density, method) for r in range(int(n_sim))]
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(_run_star, args))
        else:
            records = [run_replicate(*a) for a in args]
        reports.append(BenchmarkReport(d=d, n_sim=int(n_sim), density=density, seed=seed, records=records))
    return reports


def _run_star(args):
    return run_replicate(*args)
