"""K-fold cross-validation over (lambda, gamma = lambda_g / lambda, k)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import UndirectedGraph
from .normal import stream
from .problem import RegressionProblem
from .solver import FitResult, PenaltySpec, SolverConfig, fit

DEFAULT_GAMMAS = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0)
# stream id for fold assignment; 0 and 1 are taken by design and noise
FOLD_STREAM = 2
TIE_RTOL = 1e-12
# held-out errors need far less accuracy than the reported fit; the refit uses SolverConfig()
CV_SOLVER = SolverConfig(eps_abs=1e-6, eps_rel=1e-4)


def default_lambda_grid(problem: RegressionProblem, size: int = 50, ratio: float = 1e-4) -> np.ndarray:
    """``size`` log-spaced values from ``||X'y/N||_inf`` down to ``ratio`` times that."""
    lam_max = float(np.max(np.abs(problem.X.T @ problem.y)) / problem.N)
    if lam_max == 0:
        raise ValueError("zero design/response: ||X'y/N||_inf = 0")
    return np.geomspace(lam_max, ratio * lam_max, size)


@dataclass(frozen=True)
class CVConfig:
    folds: int = 5
    lambda_grid: tuple | None = None  # None means default_lambda_grid(problem)
    gamma_grid: tuple = DEFAULT_GAMMAS
    k_candidates: tuple = (0,)
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.lambda_grid is not None:
            g = np.asarray(self.lambda_grid, dtype=float)
            if g.ndim != 1 or g.size == 0 or np.any(~(g > 0)) or np.any(~np.isfinite(g)):
                raise ValueError("lambda grid must be a non-empty list of positive finite values")
            if np.any(np.diff(g) > 0):
                raise ValueError("lambda grid must be non-increasing")
            object.__setattr__(self, "lambda_grid", tuple(float(v) for v in g))
        if len(self.gamma_grid) == 0 or any(not (g >= 0 and np.isfinite(g)) for g in self.gamma_grid):
            raise ValueError("gamma grid must be a non-empty list of finite values >= 0")
        if len(self.k_candidates) == 0 or any(int(k) != k or k < 0 for k in self.k_candidates):
            raise ValueError("k candidates must be a non-empty set of integers >= 0")
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        object.__setattr__(self, "k_candidates", tuple(int(k) for k in self.k_candidates))


@dataclass(frozen=True)
class CVResult:
    best: tuple  # (lam, lam_g, k)
    cv_errors: np.ndarray = field(repr=False)    # (len(k), len(gamma), len(lambda))
    fold_errors: np.ndarray = field(repr=False)  # (folds, len(k), len(gamma), len(lambda))
    lambda_grid: tuple = field(repr=False)
    gamma_grid: tuple = field(repr=False)
    k_candidates: tuple = field(repr=False)
    kind: str = "gppl"
    seed: int = 0
    refit: FitResult | None = field(default=None, repr=False)

    @property
    def best_error(self) -> float:
        return float(np.min(self.cv_errors))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": int(self.seed),
            "best": {"lambda": self.best[0], "lambda_g": self.best[1], "k": self.best[2]},
            "lambda_grid": list(self.lambda_grid),
            "gamma_grid": list(self.gamma_grid),
            "k_candidates": list(self.k_candidates),
            "cv_errors": self.cv_errors.tolist(),
            "fold_errors": self.fold_errors.tolist(),
        }


def fold_indices(N: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded permutation of ``range(N)`` cut into ``folds`` contiguous blocks of near-equal size."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > N:
        raise ValueError(f"{folds} folds but only {N} samples")
    perm = stream(seed, FOLD_STREAM).permutation(N)
    return np.array_split(perm, folds)


def _effective_grids(kind, config):
    # tuning axes that the penalty kind does not use collapse to a single value
    gammas = config.gamma_grid if kind != "lasso" else (0.0,)
    ks = config.k_candidates if kind == "gppl" else (0,)
    return gammas, ks


def _path_errors(train, test, graph, kind, k, gamma, lambdas, solver_config, warm):
    out = np.empty(len(lambdas))
    prev = None
    for i, lam in enumerate(lambdas):
        if i and lam == lambdas[i - 1]:
            # repeated grid value: reuse the fit so duplicates score identically
            out[i] = out[i - 1]
            continue
        pen = PenaltySpec(kind, lam, gamma * lam, k)
        res = fit(train, graph, pen, solver_config, warm_start=prev if warm else None)
        prev = res
        r = test.y - test.X @ res.beta_hat
        out[i] = r @ r / test.N
    return out


def cross_validate(problem: RegressionProblem, graph: UndirectedGraph | None, config: CVConfig,
                   penalty_kind: str = "gppl", solver_config: SolverConfig | None = None,
                   refit: bool = True) -> CVResult:
    """Pick (lambda, lambda_g, k) minimizing the mean held-out squared error.

    Ties within a relative ``1e-12`` go to the smallest lambda, then gamma,
    then k; exact duplicates in a grid resolve to the first occurrence.
    Path fits use ``solver_config`` (default :data:`CV_SOLVER`); the refit on
    all data always uses the default :class:`SolverConfig`.
    """
    refit_config = SolverConfig() if solver_config is None else solver_config
    solver_config = solver_config or CV_SOLVER
    lambdas = (np.asarray(config.lambda_grid) if config.lambda_grid is not None
               else default_lambda_grid(problem))
    gammas, ks = _effective_grids(penalty_kind, config)
    blocks = fold_indices(problem.N, config.folds, config.seed)
    if min(len(b) for b in blocks) < 1:
        raise ValueError("a fold is empty")
    errs = np.empty((config.folds, len(ks), len(gammas), len(lambdas)))
    all_rows = np.arange(problem.N)
    for f, held in enumerate(blocks):
        train = problem.subset(np.setdiff1d(all_rows, held))
        test = problem.subset(np.sort(held))
        for a, k in enumerate(ks):
            for b, gamma in enumerate(gammas):
                errs[f, a, b] = _path_errors(train, test, graph, penalty_kind, k, gamma,
                                             lambdas, solver_config, config.warm_start)
    mean = errs.mean(axis=0)
    bad = np.argwhere(~np.isfinite(mean))
    if bad.size:
        a, b, c = bad[0]
        raise FloatingPointError(
            f"non-finite CV error at lambda={lambdas[c]:g}, gamma={gammas[b]:g}, k={ks[a]}")
    a, b, c = select_best(mean, lambdas, gammas, ks)
    lam = float(lambdas[c])
    best = (lam, float(gammas[b] * lam), int(ks[a]))
    result = None
    if refit:
        result = fit(problem, graph, PenaltySpec(penalty_kind, best[0], best[1], best[2]),
                     refit_config)
    return CVResult(best, mean, errs, tuple(float(v) for v in lambdas), tuple(gammas),
                    tuple(ks), penalty_kind, config.seed, result)


def select_best(mean, lambdas, gammas, ks) -> tuple[int, int, int]:
    """Index (k, gamma, lambda) of the minimum with the documented tie-break."""
    m = float(mean.min())
    near = np.argwhere(np.abs(mean - m) <= TIE_RTOL * abs(m))
    # argwhere is in C order, so a stable sort keeps the first occurrence among equal keys
    keys = [(lambdas[c], gammas[b], ks[a]) for a, b, c in near]
    order = sorted(range(len(near)), key=lambda i: keys[i])
    return tuple(int(v) for v in near[order[0]])
