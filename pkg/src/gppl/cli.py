"""Command-line entry point: ``gppl {fit,cv,infer,simulate,bench,graph}``.

Exit codes: 0 success, 1 malformed input, 2 dimension mismatch,
3 non-convergence (results are still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .clime import ClimeConvergenceError, GramMatrix, clime_fit, default_mu
from .cv import CVConfig, cross_validate
from .experiments import GRID_METHODS, PATH_METHODS, bench_cell, calibration_study
from .graph import (build_diff_operator, build_incidence, build_laplacian, max_degree,
                    n_components, structure_counts)
from .inference import confidence_intervals, one_step, quadratic_forms
from .io import (MalformedInputError, read_csv_matrix, read_csv_vector, read_edge_list,
                 sha256_file, write_csv, write_edge_list, write_json, write_matrix_market)
from .normal import norm_ppf, two_sided_pvalue
from .problem import DimensionError, RegressionProblem
from .simulate import DEFAULT_SIGMA_EPS, FAMILIES, ScenarioSpec, make_dataset, scenario_graph
from .solver import GRAPH_KINDS, KINDS, PenaltySpec, SolverConfig, fit

log = logging.getLogger("gppl")

EXIT_OK, EXIT_MALFORMED, EXIT_DIMENSION, EXIT_NONCONVERGENCE = 0, 1, 2, 3
THREADS_ENV = "GPPL_NUM_THREADS"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the dimension code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_MALFORMED, f"{self.prog}: error: {message}\n")


class _NonConvergence(Exception):
    pass


def _sigma(text):
    if text == "estimate":
        return "estimate"
    if text.startswith("known:"):
        try:
            v = float(text[6:])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad sigma value {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError("known sigma must be positive")
        return v
    raise argparse.ArgumentTypeError("expected 'known:<value>' or 'estimate'")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data(p, graph_required=False):
    p.add_argument("--design", required=True, help="X as CSV (N rows, n columns)")
    p.add_argument("--response", required=True, help="y as CSV (one column)")
    p.add_argument("--graph", required=graph_required, help="edge list, 1-based, first line 'n <count>'")


def _add_penalty(p):
    p.add_argument("--kind", choices=KINDS, default="gppl")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda-g", dest="lam_g", type=float, default=0.0)
    p.add_argument("--max-iter", type=int, default=SolverConfig().max_iter, help="ADMM iteration cap")


def _add_cv(p):
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lambdas", type=_floats, help="descending lambda grid (default: 50 log-spaced)")
    p.add_argument("--gammas", type=_floats, default=[0.0, 0.1, 0.5, 1.0, 2.0, 5.0],
                   help="lambda_g / lambda ratios")
    p.add_argument("--ks", type=_ints, help="candidate orders (default: --k)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gppl", description="Graph piecewise-polynomial lasso toolkit.")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of flag values; explicit flags take precedence")
        p.add_argument("--out-dir", default=".")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = command("fit", "fit one penalized regression")
    _add_data(p)
    _add_penalty(p)

    p = command("cv", "cross-validate the tuning parameters and refit")
    _add_data(p)
    _add_penalty(p)
    _add_cv(p)

    p = command("infer", "one-step estimate, confidence intervals and z-tests")
    _add_data(p)
    _add_penalty(p)
    _add_cv(p)
    p.add_argument("--mu", type=float, help="CLIME constraint level (default 0.05 sqrt(log n / N))")
    p.add_argument("--ridge", type=float, default=0.0, help="diagonal added to X'X/N before CLIME")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sigma", type=_sigma, default="estimate", help="known:<value> or estimate")

    p = command("simulate", "write a synthetic dataset")
    p.add_argument("--family", choices=FAMILIES, default="path_250")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--samples", type=int, default=200, help="N")
    p.add_argument("--sigma-eps", type=float, default=DEFAULT_SIGMA_EPS)

    p = command("bench", "Monte Carlo tables and calibration data")
    p.add_argument("--study", choices=("table", "calibration"), default="table")
    p.add_argument("--family", choices=FAMILIES, default="path_250")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--samples", type=int, default=200, help="N")
    p.add_argument("--methods", help="comma-separated penalty kinds (default: the four compared)")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--sigma-eps", type=float, default=DEFAULT_SIGMA_EPS)
    p.add_argument("--alpha", type=float, default=0.05)

    p = command("graph", "export graph operators in MatrixMarket format")
    p.add_argument("--graph", help="edge list (default: the --family graph)")
    p.add_argument("--family", choices=FAMILIES, default="path_250")
    p.add_argument("--k", type=int, default=0)
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = next((tok for tok in argv if tok in COMMANDS), None)
    path = _config_path(argv)
    if command and path:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.exit(EXIT_MALFORMED, f"gppl: error: cannot read config: {exc}\n")
        if not isinstance(cfg, dict):
            parser.exit(EXIT_MALFORMED, "gppl: error: config must be a JSON object\n")
        sub = parser._subparsers._group_actions[0].choices[command]
        renames = {"lambda": "lam", "lambda_g": "lam_g"}
        cfg = {renames.get(k.replace("-", "_"), k.replace("-", "_")): v for k, v in cfg.items()}
        actions = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(actions))
        if unknown:
            parser.exit(EXIT_MALFORMED, f"gppl: error: unknown config keys {unknown}\n")
        for dest, value in cfg.items():
            action = actions[dest]
            if isinstance(value, str) and action.type is not None:
                try:
                    value = action.type(value)
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    parser.exit(EXIT_MALFORMED, f"gppl: error: config {dest}: {exc}\n")
            cfg[dest] = value
            action.required = False
        # file values become defaults, so explicit flags still win
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _load_problem(args, need_graph):
    X = read_csv_matrix(args.design)
    y = read_csv_vector(args.response)
    if len(y) != X.shape[0]:
        raise DimensionError(f"design has {X.shape[0]} rows but response has {len(y)} entries")
    graph = None
    if args.graph:
        graph = read_edge_list(args.graph)
        if graph.n != X.shape[1]:
            raise DimensionError(f"graph has {graph.n} nodes but the design has {X.shape[1]} columns")
    elif need_graph:
        raise MalformedInputError(f"penalty kind {args.kind!r} needs --graph")
    return RegressionProblem(X, y), graph


def _inputs(args, names):
    out = {}
    for name in names:
        path = getattr(args, name, None)
        if path:
            out[name] = {"file": Path(path).name, "sha256": sha256_file(path)}
    return out


def _manifest(args, out_dir, files, inputs=None, extra=None):
    """Write manifest.json listing every output with its hash; timings go to the log only."""
    manifest = {
        "command": args.command,
        "config": Path(args.config).name if args.config else None,
        "seed": args.seed,
        "version": _version(),
        "inputs": inputs or {},
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(files)},
        "arguments": {k: v for k, v in sorted(vars(args).items())
                      if k not in ("out_dir", "config", "verbose", "command")
                      and k not in ("design", "response", "graph")},
    }
    if extra:
        manifest.update(extra)
    write_json(manifest, out_dir / "manifest.json")


def _penalty(args, lam=None):
    lam = args.lam if lam is None else lam
    if lam is None:
        raise MalformedInputError("--lambda is required")
    return PenaltySpec(args.kind, lam, args.lam_g, args.k)


def _solver(args):
    return SolverConfig(max_iter=args.max_iter)


def _write_fit(res, out_dir):
    write_json(res.to_dict(), out_dir / "fit.json")
    write_csv(res.beta_hat, out_dir / "beta.csv")
    return ["fit.json", "beta.csv"]


def cmd_fit(args, out_dir):
    problem, graph = _load_problem(args, args.kind in GRAPH_KINDS)
    res = fit(problem, graph, _penalty(args), _solver(args))
    files = _write_fit(res, out_dir)
    _manifest(args, out_dir, files, _inputs(args, ("design", "response", "graph")))
    if not res.converged:
        raise _NonConvergence(f"ADMM stopped after {res.iterations} iterations")


def _cv_config(args):
    ks = args.ks if args.ks else [args.k]
    return CVConfig(folds=args.folds, lambda_grid=tuple(args.lambdas) if args.lambdas else None,
                    gamma_grid=tuple(args.gammas), k_candidates=tuple(ks), seed=args.seed)


def cmd_cv(args, out_dir):
    problem, graph = _load_problem(args, args.kind in GRAPH_KINDS)
    res = cross_validate(problem, graph, _cv_config(args), args.kind, refit=False)
    res = replace(res, refit=fit(problem, graph, PenaltySpec(args.kind, *res.best), _solver(args)))
    write_json(res.to_dict(), out_dir / "cv.json")
    files = ["cv.json"] + _write_fit(res.refit, out_dir)
    _manifest(args, out_dir, files, _inputs(args, ("design", "response", "graph")))
    if not res.refit.converged:
        raise _NonConvergence("refit did not converge")


def cmd_infer(args, out_dir):
    problem, graph = _load_problem(args, args.kind in GRAPH_KINDS)
    if not 0 < args.alpha < 1:
        raise MalformedInputError("--alpha must lie in (0, 1)")
    if args.lam is None:
        cv = cross_validate(problem, graph, _cv_config(args), args.kind, refit=False)
        penalty = PenaltySpec(args.kind, cv.best[0], cv.best[1], cv.best[2])
    else:
        penalty = _penalty(args)
    res = fit(problem, graph, penalty, _solver(args))
    files = _write_fit(res, out_dir)
    mu = args.mu if args.mu is not None else default_mu(0.05, problem.n, problem.N)
    gram = GramMatrix.from_design(problem.X, args.ridge)
    theta = clime_fit(gram, mu)
    write_csv(theta.theta_hat, out_dir / "theta.csv")
    write_json(theta.to_dict(), out_dir / "clime.json")
    beta_tilde = one_step(res.beta_hat, theta, problem)
    report = confidence_intervals(beta_tilde, theta, gram, args.sigma, args.alpha, problem,
                                  res.beta_hat)
    tests = _all_tests(beta_tilde, theta, gram, graph, report.sigma_used, args.alpha)
    payload = report.to_dict()
    payload["tests"] = tests
    payload["tuning"] = {"lambda": penalty.lam, "lambda_g": penalty.lam_g, "k": penalty.k,
                         "kind": penalty.kind, "mu": mu, "ridge": args.ridge}
    write_json(payload, out_dir / "inference.json")
    files += ["theta.csv", "clime.json", "inference.json"]
    _manifest(args, out_dir, files, _inputs(args, ("design", "response", "graph")))
    if not res.converged:
        raise _NonConvergence("initial fit did not converge")


def _all_tests(beta_tilde, theta, gram, graph, sigma, alpha):
    """Coordinate tests for every j and edge tests for every edge, vectorized."""
    crit = norm_ppf(1 - alpha / 2)
    N = gram.N
    records = []

    def emit(kind, contrasts, values):
        q = quadratic_forms(theta, gram, contrasts)
        for t, (qt, v) in enumerate(zip(q, values)):
            if not qt > 0:
                records.append({"kind": kind, "target": t, "statistic": None,
                                "p_value": None, "reject": None})
                continue
            z = np.sqrt(N) * v / (sigma * np.sqrt(qt))
            records.append({"kind": kind, "target": t, "statistic": float(z),
                            "p_value": float(two_sided_pvalue(z)), "reject": bool(abs(z) > crit)})

    emit("coordinate", np.eye(len(beta_tilde)), beta_tilde)
    if graph is not None and graph.p:
        F = build_incidence(graph).toarray().astype(float)
        emit("edge", F, F @ beta_tilde)
    return records


def cmd_simulate(args, out_dir):
    spec = ScenarioSpec(args.family, args.scenario, args.samples, args.sigma_eps, args.seed)
    ds = make_dataset(spec)
    write_csv(ds.problem.X, out_dir / "X.csv")
    write_csv(ds.problem.y, out_dir / "y.csv")
    write_csv(ds.beta_star, out_dir / "beta_star.csv")
    write_edge_list(ds.graph, out_dir / "graph.edges")
    counts = {}
    for k in (0, 1, 2):
        s1, s2 = structure_counts(ds.beta_star, build_diff_operator(ds.graph, k))
        counts[f"k={k}"] = {"s1": s1, "s2": s2}
    extra = {"spec": {"family": spec.family, "scenario": spec.scenario, "N": spec.N,
                      "sigma_eps": spec.sigma_eps, "seed": spec.seed},
             "counts": counts}
    _manifest(args, out_dir, ["X.csv", "y.csv", "beta_star.csv", "graph.edges"], extra=extra)


def cmd_bench(args, out_dir):
    if args.reps < 2:
        raise MalformedInputError("--reps must be at least 2 for standard errors")
    if args.study == "calibration":
        return _bench_calibration(args, out_dir)
    default = PATH_METHODS if args.family == "path_250" else GRID_METHODS
    methods = args.methods.split(",") if args.methods else list(default)
    for m in methods:
        if m not in KINDS:
            raise MalformedInputError(f"unknown method {m!r}")
    cells = [bench_cell(args.family, args.scenario, args.samples, m, args.reps, args.seed,
                        args.sigma_eps) for m in methods]
    lines = ["family,scenario,N,method,reps,mean_l2_error,se"]
    lines += [f"{c.family},{c.scenario},{c.N},{c.method},{len(c.errors)},{c.mean:.17g},{c.se:.17g}"
              for c in cells]
    (out_dir / "table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    per_rep = ["method,rep,seed,l2_error"]
    per_rep += [f"{c.method},{r},{s},{e:.17g}" for c in cells
                for r, (s, e) in enumerate(zip(c.seeds, c.errors))]
    (out_dir / "errors.csv").write_text("\n".join(per_rep) + "\n", encoding="utf-8")
    _manifest(args, out_dir, ["table.csv", "errors.csv"])


def _bench_calibration(args, out_dir):
    res = calibration_study(trials=args.reps, N=args.samples, seed=args.seed,
                            sigma_eps=args.sigma_eps, alpha=args.alpha)
    write_csv(res.qq_rows(), out_dir / "qq.csv",
              header=["theoretical", "z_known_sigma", "z_estimated_sigma"])
    cov = np.column_stack([np.arange(args.reps), res.intervals_known, res.covered_known,
                           res.intervals_estimated, res.covered_estimated, res.edge_p,
                           res.edge_reject])
    write_csv(cov, out_dir / "coverage.csv",
              header=["trial", "lo_known", "hi_known", "covered_known", "lo_estimated",
                      "hi_estimated", "covered_estimated", "edge_p_value", "edge_reject"])
    summary = {"coverage_known": res.coverage_known,
               "coverage_estimated": res.coverage_estimated,
               "edge_type_one_error": res.type_one_error,
               "ks_pvalue_known": res.ks_pvalue(),
               "tuning": {"lambda": res.tuning[0], "lambda_g": res.tuning[1], "k": res.tuning[2]},
               "mu_known": res.mu_known, "mu_estimated": res.mu_estimated,
               "clime_feasibility": list(res.feasibility), "trials": args.reps}
    write_json(summary, out_dir / "calibration.json")
    _manifest(args, out_dir, ["qq.csv", "coverage.csv", "calibration.json"])


def cmd_graph(args, out_dir):
    graph = read_edge_list(args.graph) if args.graph else scenario_graph(args.family)
    op = build_diff_operator(graph, args.k)
    write_matrix_market(build_incidence(graph), out_dir / "incidence.mtx")
    write_matrix_market(build_laplacian(graph), out_dir / "laplacian.mtx")
    write_matrix_market(op.matrix, out_dir / "delta.mtx")
    write_json({"n": graph.n, "p": graph.p, "k": args.k, "m": op.m,
                "components": n_components(graph), "max_degree": max_degree(graph)},
               out_dir / "graph.json")
    _manifest(args, out_dir, ["incidence.mtx", "laplacian.mtx", "delta.mtx", "graph.json"],
              _inputs(args, ("graph",)))


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "infer": cmd_infer, "simulate": cmd_simulate,
            "bench": cmd_bench, "graph": cmd_graph}


def _limit_threads():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    try:
        cap = int(value)
    except ValueError:
        return None
    from threadpoolctl import threadpool_info, threadpool_limits
    current = max((p["num_threads"] for p in threadpool_info()), default=cap)
    # an upper bound only: never raise the thread count
    return threadpool_limits(limits=max(1, min(cap, current)))


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_MALFORMED
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads()
    out_dir = Path(args.out_dir)
    start = time.perf_counter()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out_dir)
    except DimensionError as exc:
        print(f"gppl: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (MalformedInputError, OSError) as exc:
        print(f"gppl: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (_NonConvergence, ClimeConvergenceError) as exc:
        print(f"gppl: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"gppl: invalid input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
