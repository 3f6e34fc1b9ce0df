"""
Command-line interface.

Exit codes: 0 success, 2 input error, 3 solver non-convergence.
"""
import argparse
import csv
import datetime
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .graph import GraphError, build_constraint_matrix
from .hr_core import (
    DomainError,
    gamma_to_q,
    gamma_to_theta,
    q_to_gamma,
    surrogate_loglik,
    validate_q,
    validate_variogram,
)
from .io import (
    InputError,
    read_data_csv,
    read_graph,
    read_matrix,
    write_json,
    write_matrix_csv,
    write_matrix_json,
)
from .sim import DEFAULT_DENSITY, run_benchmark
from .solver_s1 import ConvergenceError, fit_s1, s1_optimality_certificate
from .solver_s2 import kkt_certificate, solve_dual
from .variogram import (
    check_emtp2,
    check_metric,
    empirical_variogram,
    select_exceedances,
    to_exponential_margins,
)

logger = logging.getLogger("hrmetric")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

LIKELIHOOD_NOTE = "validation scores use the surrogate log-likelihood, not the exact Husler-Reiss density"


def _metadata(args):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "version": __version__,
        "command": args.command,
        "config": config,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _out_path(args, name):
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _variogram_from_data(path, header, p):
    raw = read_data_csv(path, header=header)
    try:
        ds = select_exceedances(to_exponential_margins(raw), p)
        ev = empirical_variogram(ds)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return ev, ds


def _diagnostics(gamma, graph=None):
    rep = check_metric(gamma, graph)
    try:
        rep.emtp2_nonpositive_fraction = check_emtp2(gamma_to_theta(gamma))
    except DomainError:
        rep.emtp2_nonpositive_fraction = None
    out = rep.to_dict()
    v = validate_variogram(gamma)
    out["variogram_valid"] = v.valid
    out["min_reduced_eigenvalue"] = v.min_eigenvalue
    return out


def cmd_variogram(args):
    ev, ds = _variogram_from_data(args.data, args.header, args.p)
    gamma = ev.matrix
    diag = _diagnostics(gamma)
    diag.update(
        n_exceedances=int(ds.n),
        anchor_counts=ev.anchor_counts.tolist(),
        zero_anchors=[k + 1 for k in ev.zero_anchors],
        threshold=ds.threshold,
        metadata=_metadata(args),
    )
    if args.out is None:
        write_json({"variogram": gamma, "diagnostics": diag}, None)
    else:
        write_matrix_csv(gamma, _out_path(args, "variogram.csv"))
        write_matrix_json(gamma, _out_path(args, "variogram.json"))
        write_json(diag, _out_path(args, "diagnostics.json"))
    return EXIT_OK


def _load_gamma_bar(args):
    if args.variogram is not None:
        gamma = read_matrix(args.variogram)
    elif args.data is not None:
        gamma = _variogram_from_data(args.data, args.header, args.p)[0].matrix
    else:
        raise InputError("one of --variogram or --data is required")
    return gamma


def _load_validation(args, d):
    if args.validation is not None:
        g = read_matrix(args.validation)
    elif args.validation_data is not None:
        g = _variogram_from_data(args.validation_data, args.header, args.p)[0].matrix
    else:
        return None
    if g.shape != (d, d):
        raise InputError(f"validation variogram has shape {g.shape}, expected {(d, d)}")
    return g


def fit_one(gamma_bar, graph, validation=None, tol_kkt=None, tol_gap=None, max_iter=5000, trace=False):
    """Run both steps on one graph and assemble the report dictionary.

    Raises :class:`ConvergenceError` with a partial report attached as
    ``exc.report``.
    """
    report = {"graph": {"d": graph.d, "n_edges": graph.n_edges}}
    try:
        s1 = fit_s1(gamma_bar, graph, max_iter=max_iter)
    except ConvergenceError as exc:
        report["error"] = {"stage": "s1", "message": str(exc), "residuals": exc.residuals}
        exc.report = report
        raise
    cert = s1_optimality_certificate(s1, gamma_bar, graph)
    report["s1"] = {**s1.to_dict(), "certificate": cert.to_dict()}
    system = build_constraint_matrix(graph)
    violations = check_metric(s1.gamma_hat, graph)
    report["dual_dimension"] = system.m
    report["s1_violations"] = violations.violated
    report["s1_already_feasible"] = violations.violated == 0
    try:
        s2 = solve_dual(
            s1.q_hat,
            system,
            tol_kkt=tol_kkt,
            tol_gap=tol_gap,
            max_iter=max_iter,
            gamma_hat=s1.gamma_hat,
            trace=trace,
        )
    except ConvergenceError as exc:
        report["error"] = {"stage": "s2", "message": str(exc), "residuals": exc.residuals}
        exc.report = report
        raise
    s2_dict = s2.to_dict(trace=trace)
    s2_dict["active_constraints"] = [
        {"i": int(a) + 1, "j": int(b) + 1, "k": int(c) + 1, "eta": float(e)}
        for (a, b, c), e in zip(system.orientations, s2.eta_check)
        if e > 0
    ]
    s2_dict["kkt"] = kkt_certificate(s2, system, tol_kkt=s2.kkt.tol).to_dict()
    report["s2"] = s2_dict
    report["loglik"] = {
        "train": {
            "s1": surrogate_loglik(s1.q_hat, gamma_bar),
            "s2": surrogate_loglik(s2.q_check, gamma_bar),
        }
    }
    if validation is not None:
        report["loglik"]["validation"] = {
            "s1": surrogate_loglik(s1.q_hat, validation),
            "s2": surrogate_loglik(s2.q_check, validation),
        }
    return report


def _graph_list(args):
    if args.graph is not None:
        return [Path(args.graph)]
    if args.graphs is not None:
        lst = Path(args.graphs)
        try:
            lines = lst.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise InputError(f"cannot read {lst}: {exc}") from exc
        paths = [Path(s.strip()) for s in lines if s.strip() and not s.lstrip().startswith("#")]
        return [p if p.is_absolute() else lst.parent / p for p in paths]
    raise InputError("one of --graph or --graphs is required")


def cmd_fit(args):
    gamma_bar = _load_gamma_bar(args)
    d = gamma_bar.shape[0]
    validation = _load_validation(args, d)
    paths = _graph_list(args)
    graphs = [read_graph(p, d=d) for p in paths]
    reports = []
    status = EXIT_OK
    for path, graph in zip(paths, graphs):
        try:
            rep = fit_one(
                gamma_bar,
                graph,
                validation=validation,
                tol_kkt=args.tol_kkt,
                tol_gap=args.tol_gap,
                max_iter=args.max_iter,
                trace=args.trace,
            )
        except ConvergenceError as exc:
            rep = exc.report
            status = EXIT_SOLVER
        rep["graph"]["path"] = str(path)
        reports.append(rep)
    meta = _metadata(args)
    meta["likelihood_note"] = LIKELIHOOD_NOTE
    if args.graph is not None:
        out = {**reports[0], "metadata": meta}
        write_json(out, _out_path(args, "fit_report.json"))
    else:
        table = [
            {
                "graph": r["graph"]["path"],
                "n_edges": r["graph"]["n_edges"],
                "s1_already_feasible": r.get("s1_already_feasible"),
                "loglik_s1": r.get("loglik", {}).get("validation", r.get("loglik", {}).get("train", {})).get("s1"),
                "loglik_s2": r.get("loglik", {}).get("validation", r.get("loglik", {}).get("train", {})).get("s2"),
                "error": r.get("error", {}).get("message", ""),
            }
            for r in reports
        ]
        write_json({"fits": reports, "table": table, "metadata": meta}, _out_path(args, "fit_report.json"))
        if args.out is not None:
            with open(_out_path(args, "fit_table.csv"), "w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=list(table[0]))
                w.writeheader()
                w.writerows(table)
    return status


def cmd_check(args):
    if args.variogram is None:
        raise InputError("--variogram is required")
    gamma = read_matrix(args.variogram)
    if not np.allclose(gamma, gamma.T):
        raise InputError(f"{args.variogram}: matrix is not symmetric")
    graph = read_graph(args.graph, d=gamma.shape[0]) if args.graph else None
    out = _diagnostics(gamma, graph)
    out["graph"] = "complete" if graph is None else str(args.graph)
    out["metadata"] = _metadata(args)
    write_json(out, _out_path(args, "diagnostics.json"))
    return EXIT_OK


def cmd_simulate(args):
    d_list = [int(s) for s in str(args.d).split(",") if s.strip()]
    reports = run_benchmark(
        d_list, args.n_sim, density=args.density, seed=args.seed, workers=args.workers
    )
    summary = {
        "rows": {
            "dual_dimension": {str(r.d): r.mean_dual_dimension for r in reports},
            "start_proportion": {str(r.d): r.mean_start_proportion for r in reports},
            "duality_gap": {str(r.d): r.mean_gap for r in reports},
            "time_seconds": {str(r.d): r.mean_time_seconds for r in reports},
        },
        "n_sim": args.n_sim,
        "errors": {str(r.d): r.n_errors for r in reports},
        "start_proportion_convention": "percentage of all 3|triangles| oriented inequalities",
        "metadata": _metadata(args),
    }
    rows = [row for r in reports for row in r.rows()]
    if args.out is not None:
        with open(_out_path(args, "benchmark.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    write_json(summary, _out_path(args, "summary.json"))
    return EXIT_OK


def cmd_loglik(args):
    if args.validation is None:
        raise InputError("--validation is required")
    val = read_matrix(args.validation)
    if args.q is not None:
        q = read_matrix(args.q)
        if not validate_q(q):
            raise DomainError(f"{args.q}: not a valid weighted adjacency matrix")
        source = "q"
    elif args.variogram is not None:
        gamma = read_matrix(args.variogram)
        q = gamma_to_q(gamma)
        source = "gamma"
    else:
        raise InputError("one of --variogram or --q is required")
    if q.shape != val.shape:
        raise InputError(f"parameter has shape {q.shape}, validation variogram {val.shape}")
    out = {
        "kind": "surrogate_loglik",
        "value": surrogate_loglik(q, val),
        "parameter": source,
        "note": LIKELIHOOD_NOTE,
        "metadata": _metadata(args),
    }
    write_json(out, _out_path(args, "loglik.json"))
    return EXIT_OK


def _positive(kind):
    def parse(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v

    return parse


def _probability(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {s}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hrmetric",
        description="Locally metrical Husler-Reiss graphical models: variograms, two-step fits, diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (stdout when omitted)")

    def data_opts(p):
        p.add_argument("--data", help="observation CSV, one row per observation")
        p.add_argument("--header", action="store_true", help="data CSV has a header row")
        p.add_argument("--p", type=_probability, default=0.85, help="threshold probability")

    p = sub.add_parser("variogram", help="empirical variogram and diagnostics from data")
    data_opts(p)
    common(p)
    p.set_defaults(func=cmd_variogram)

    p = sub.add_parser("fit", help="two-step estimate on one or more graphs")
    data_opts(p)
    p.add_argument("--variogram", help="empirical variogram matrix (CSV or JSON)")
    p.add_argument("--graph", help="graph JSON or edge CSV")
    p.add_argument("--graphs", help="text file listing graph files, one per line")
    p.add_argument("--validation", help="validation variogram matrix")
    p.add_argument("--validation-data", help="validation observations CSV")
    p.add_argument("--tol-kkt", type=_positive(float), default=None)
    p.add_argument("--tol-gap", type=_positive(float), default=None)
    p.add_argument("--max-iter", type=_positive(int), default=5000)
    p.add_argument("--trace", action="store_true", help="include the dual objective trace")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("check", help="triangle-inequality and EMTP2 diagnostics")
    p.add_argument("--variogram", help="variogram matrix (CSV or JSON)")
    p.add_argument("--graph", help="restrict to the triangles of this graph")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="benchmark on random sphere variograms and graphs")
    p.add_argument("--d", default="20,50", help="comma-separated dimensions")
    p.add_argument("--n-sim", type=_positive(int), default=100)
    p.add_argument("--density", type=_positive(float), default=DEFAULT_DENSITY)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive(int), default=1)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("loglik", help="surrogate log-likelihood on a validation variogram")
    p.add_argument("--variogram", help="parameter as a variogram matrix")
    p.add_argument("--q", help="parameter as a weighted adjacency matrix")
    p.add_argument("--validation", help="validation variogram matrix")
    common(p)
    p.set_defaults(func=cmd_loglik)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InputError, GraphError, DomainError, ValueError) as exc:
        print(f"hrmetric {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"hrmetric {args.command}: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
