"""Locally metrical Husler-Reiss graphical models.

Parameter algebra (``hr_core``), graph and triangle-constraint machinery
(``graph``), variogram estimation and diagnostics (``variogram``), the
two estimation steps (``solver_s1``, ``solver_s2``), a simulation harness
(``sim``) and a command-line front end (``cli``).

Vertices are 0-based in the Python API; files and the CLI use 1-based labels.
"""

__version__ = "0.1.0"

from .graph import (
    DisconnectedGraphError,
    GraphError,
    TriangleConstraintSystem,
    UndirectedGraph,
    build_constraint_matrix,
    build_graph,
    complete_graph,
    enumerate_triangles,
    random_connected_graph,
)
from .hr_core import (
    DomainError,
    cayley_menger_logdet,
    farris_transform,
    fenchel_conjugate,
    gamma_to_q,
    gamma_to_theta,
    kl_divergence,
    q_to_gamma,
    reciprocal_loglik,
    spanning_tree_log_sum,
    surrogate_loglik,
    theta_to_gamma,
    validate_variogram,
)
from .sim import run_benchmark, sample_extremal_function, sample_sphere_variogram
from .solver_s1 import ConvergenceError, fit_s1, s1_optimality_certificate
from .solver_s2 import dual_gradient, dual_objective, duality_gap, kkt_certificate, q_of_eta, solve_dual
from .variogram import (
    check_emtp2,
    check_metric,
    empirical_variogram,
    select_exceedances,
    to_exponential_margins,
)
