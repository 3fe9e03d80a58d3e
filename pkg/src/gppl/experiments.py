"""Monte Carlo harnesses: estimation-error benchmark cells and the inference calibration study."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .clime import GramMatrix, PrecisionSurrogate, clime_fit, default_mu
from .cv import CVConfig, cross_validate
from .inference import confidence_intervals, one_step, test_edge
from .problem import RegressionProblem
from .simulate import (DEFAULT_SIGMA_EPS, SCENARIO_ORDER, ScenarioSpec, gaussian_design,
                       gaussian_noise, make_beta_star, make_dataset, scenario_graph)
from .solver import PenaltySpec, fit

log = logging.getLogger(__name__)

PATH_METHODS = ("gppl", "lasso", "smooth", "spline")
GRID_METHODS = ("gppl", "lasso", "graph_smooth", "graph_spline")
# candidate orders when the scenario has no designated k
K_SEARCH = (0, 1, 2, 3)


@dataclass(frozen=True)
class BenchCell:
    family: str
    scenario: int
    N: int
    method: str
    errors: np.ndarray = field(repr=False)
    seeds: tuple = field(repr=False)

    @property
    def mean(self) -> float:
        return float(self.errors.mean())

    @property
    def se(self) -> float:
        return float(self.errors.std(ddof=1) / np.sqrt(len(self.errors)))


def bench_cell(family: str, scenario: int, N: int, method: str, reps: int, seed: int = 0,
               sigma_eps: float = DEFAULT_SIGMA_EPS, folds: int = 5) -> BenchCell:
    """``reps`` CV-tuned fits, repetition ``r`` seeded with ``seed + r``; records ||beta_hat - beta*||_2."""
    if reps < 2:
        raise ValueError("need at least 2 repetitions for a standard error")
    k = SCENARIO_ORDER.get(scenario)
    ks = (k,) if k is not None else K_SEARCH
    errors = np.empty(reps)
    seeds = tuple(seed + r for r in range(reps))
    for r, s in enumerate(seeds):
        ds = make_dataset(ScenarioSpec(family, scenario, N, sigma_eps, s))
        res = cross_validate(ds.problem, ds.graph, CVConfig(folds=folds, k_candidates=ks, seed=s),
                             method)
        errors[r] = np.linalg.norm(res.refit.beta_hat - ds.beta_star)
        log.info("%s s%d N=%d %s rep %d: l2 error %.4f", family, scenario, N, method, r,
                 errors[r])
    return BenchCell(family, scenario, N, method, errors, seeds)


@dataclass(frozen=True)
class CalibrationResult:
    """Per-trial quantities of the inference study for coordinate ``target``."""

    target: int
    z_known: np.ndarray = field(repr=False)      # standardized statistic, known sigma
    covered_known: np.ndarray = field(repr=False)
    z_estimated: np.ndarray = field(repr=False)  # standardized statistic, estimated sigma
    covered_estimated: np.ndarray = field(repr=False)
    edge_reject: np.ndarray = field(repr=False)
    edge_p: np.ndarray = field(repr=False)
    intervals_known: np.ndarray = field(repr=False)
    intervals_estimated: np.ndarray = field(repr=False)
    tuning: tuple
    mu_known: float
    mu_estimated: float
    feasibility: tuple

    @property
    def coverage_known(self) -> float:
        return float(self.covered_known.mean())

    @property
    def coverage_estimated(self) -> float:
        return float(self.covered_estimated.mean())

    @property
    def type_one_error(self) -> float:
        return float(self.edge_reject.mean())

    def ks_pvalue(self) -> float:
        return float(stats.kstest(self.z_known, "norm").pvalue)

    def qq_rows(self):
        """(theoretical quantile, sorted known-sigma statistic, sorted estimated-sigma statistic)."""
        m = len(self.z_known)
        theo = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
        return np.column_stack([theo, np.sort(self.z_known), np.sort(self.z_estimated)])


def calibration_study(trials: int = 200, N: int = 200, seed: int = 0, c_known: float = 0.05,
                      c_estimated: float = 0.08, ridge: float | None = None, target: int = 0,
                      edge: int = 0, alpha: float = 0.05, sigma_eps: float = DEFAULT_SIGMA_EPS,
                      tuning: tuple | None = None) -> CalibrationResult:
    """Coverage, Q-Q and edge-test data on the 250-node path, scenario 1.

    The design and both CLIME surrogates are computed once; each trial draws
    fresh noise, refits at fixed tuning (by default chosen by one CV run on
    the first trial) and forms the one-step estimate. ``ridge`` defaults to
    ``1 / sqrt(N)``.
    """
    graph = scenario_graph("path_250")
    beta_star = make_beta_star(ScenarioSpec("path_250", 1, N, sigma_eps, seed))
    n = len(beta_star)
    X = gaussian_design(N, n, seed)
    ridge = 1 / np.sqrt(N) if ridge is None else ridge
    gram = GramMatrix.from_design(X, ridge)
    mu_k, mu_e = default_mu(c_known, n, N), default_mu(c_estimated, n, N)
    theta_k = clime_fit(gram, mu_k)
    theta_e = clime_fit(gram, mu_e)

    def problem_for(t):
        eps = gaussian_noise(N, sigma_eps, seed, replicate=t)
        return RegressionProblem(X, X @ beta_star + eps)

    if tuning is None:
        cv = cross_validate(problem_for(0), graph, CVConfig(seed=seed), "gppl", refit=False)
        tuning = cv.best
    penalty = PenaltySpec("gppl", tuning[0], tuning[1], tuning[2])

    out = {key: np.empty(trials) for key in ("zk", "ze", "ep")}
    ck, ce, er = (np.zeros(trials, dtype=bool) for _ in range(3))
    ik, ie = np.empty((trials, 2)), np.empty((trials, 2))
    prev = None
    for t in range(trials):
        prob = problem_for(t)
        res = fit(prob, graph, penalty, warm_start=prev)
        prev = res.beta_hat
        bt_k = one_step(res.beta_hat, theta_k, prob)
        rep_k = confidence_intervals(bt_k, theta_k, gram, sigma_eps, alpha)
        bt_e = one_step(res.beta_hat, theta_e, prob)
        rep_e = confidence_intervals(bt_e, theta_e, gram, "estimate", alpha, prob, res.beta_hat)
        out["zk"][t] = (bt_k[target] - beta_star[target]) / rep_k.se[target]
        out["ze"][t] = (bt_e[target] - beta_star[target]) / rep_e.se[target]
        ik[t], ie[t] = rep_k.intervals[target], rep_e.intervals[target]
        ck[t] = ik[t, 0] <= beta_star[target] <= ik[t, 1]
        ce[t] = ie[t, 0] <= beta_star[target] <= ie[t, 1]
        tr = test_edge(edge, graph, bt_k, theta_k, gram, sigma_eps, alpha)
        er[t], out["ep"][t] = tr.reject, tr.p_value
    return CalibrationResult(target, out["zk"], ck, out["ze"], ce, er, out["ep"], ik, ie,
                             tuple(tuning), mu_k, mu_e, (theta_k.feasibility, theta_e.feasibility))


def surrogate_for(X, c: float, ridge: float = 0.0) -> tuple[GramMatrix, PrecisionSurrogate]:
    gram = GramMatrix.from_design(X, ridge)
    N, n = X.shape
    return gram, clime_fit(gram, default_mu(c, n, N))

