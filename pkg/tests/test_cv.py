import numpy as np
import pytest

from gppl.cv import (CVConfig, cross_validate, default_lambda_grid, fold_indices, select_best)
from gppl.graph import path_graph
from gppl.problem import RegressionProblem
from gppl.solver import PenaltySpec, SolverConfig, fit

TIGHT = SolverConfig()


def tiny(seed, N=25, n=8):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, n))
    beta = np.repeat([0.0, 1.0], n // 2)
    return RegressionProblem(X, X @ beta + 0.5 * rng.standard_normal(N))


def exhaustive(problem, graph, lambdas, gammas, ks, folds, seed, kind="gppl"):
    """Independent cold-start re-computation of the CV surface."""
    blocks = fold_indices(problem.N, folds, seed)
    err = np.zeros((len(ks), len(gammas), len(lambdas)))
    for held in blocks:
        train_rows = np.setdiff1d(np.arange(problem.N), held)
        Xtr, ytr = problem.X[train_rows], problem.y[train_rows]
        for a, k in enumerate(ks):
            for b, g in enumerate(gammas):
                for c, lam in enumerate(lambdas):
                    beta = fit(RegressionProblem(Xtr, ytr), graph,
                               PenaltySpec(kind, lam, g * lam, k), TIGHT).beta_hat
                    r = problem.y[held] - problem.X[held] @ beta
                    err[a, b, c] += r @ r / len(held) / folds
    return err


def test_folds_partition():
    for N, K in [(25, 5), (23, 5), (7, 7), (100, 3)]:
        blocks = fold_indices(N, K, seed=4)
        allrows = np.sort(np.concatenate(blocks))
        assert np.array_equal(allrows, np.arange(N))
        sizes = [len(b) for b in blocks]
        assert max(sizes) - min(sizes) <= 1
    with pytest.raises(ValueError):
        fold_indices(3, 4, 0)
    assert all(np.array_equal(a, b) for a, b in zip(fold_indices(30, 5, 1), fold_indices(30, 5, 1)))


def test_default_grid():
    problem = tiny(0)
    grid = default_lambda_grid(problem)
    assert len(grid) == 50 and np.all(np.diff(grid) < 0)
    assert grid[0] == pytest.approx(np.max(np.abs(problem.X.T @ problem.y)) / problem.N, rel=1e-15)
    assert grid[-1] == pytest.approx(1e-4 * grid[0], rel=1e-12)
    lasso = fit(problem, None, PenaltySpec("lasso", grid[0]))
    assert lasso.support_s2 == ()
    with pytest.raises(ValueError, match="zero design/response"):
        default_lambda_grid(RegressionProblem(problem.X, np.zeros(problem.N)))


@pytest.mark.parametrize("kw", [dict(folds=1), dict(lambda_grid=()), dict(lambda_grid=(0.1, 0.2)),
                                dict(lambda_grid=(0.1, -1.0)), dict(gamma_grid=()),
                                dict(gamma_grid=(-1.0,)), dict(k_candidates=(0.5,))])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CVConfig(**kw)


def test_single_point_grid():
    problem = tiny(1)
    res = cross_validate(problem, path_graph(8), CVConfig(lambda_grid=(0.1,), gamma_grid=(0.5,),
                                                          k_candidates=(1,)), "gppl", TIGHT)
    assert res.best == (0.1, 0.05, 1)
    ref = exhaustive(problem, path_graph(8), [0.1], [0.5], [1], 5, 0)
    assert res.best_error == pytest.approx(float(ref[0, 0, 0]), rel=1e-6)
    assert res.refit.penalty == PenaltySpec("gppl", 0.1, 0.05, 1)


def test_duplicate_entries_tie_to_first():
    problem = tiny(2)
    res = cross_validate(problem, path_graph(8),
                         CVConfig(lambda_grid=(0.2, 0.2), gamma_grid=(1.0, 1.0)), "gppl", TIGHT)
    assert res.cv_errors[0, 0, 0] == res.cv_errors[0, 0, 1] == res.cv_errors[0, 1, 0]
    assert res.best == (0.2, 0.2, 0)


def test_tie_break_order():
    mean = np.zeros((2, 2, 2))
    lambdas, gammas, ks = [0.5, 0.1], [0.0, 1.0], [0, 2]
    assert select_best(mean, lambdas, gammas, ks) == (0, 0, 1)  # smallest lambda, gamma, k
    mean[0, 0, 1] = 1.0
    assert select_best(mean, lambdas, gammas, ks) == (1, 0, 1)
    mean[:] = 1.0
    mean[1, 1, 0] = 1.0 - 1e-14  # inside the relative tie band
    assert select_best(mean, lambdas, gammas, ks) == (0, 0, 1)


def test_matches_cold_start_exhaustive_oracle():
    problem = tiny(3)
    g = path_graph(8)
    lambdas = (0.3, 0.1, 0.03)
    res = cross_validate(problem, g, CVConfig(lambda_grid=lambdas, gamma_grid=(0.0, 1.0),
                                              k_candidates=(0, 1)), "gppl", TIGHT)
    ref = exhaustive(problem, g, lambdas, (0.0, 1.0), (0, 1), 5, 0)
    assert np.allclose(res.cv_errors, ref, rtol=1e-5)
    idx = np.unravel_index(np.argmin(ref), ref.shape)
    assert res.best == (lambdas[idx[2]], (0.0, 1.0)[idx[1]] * lambdas[idx[2]], (0, 1)[idx[0]])


@pytest.mark.parametrize("seed", range(10))
def test_warm_and_cold_select_the_same(seed):
    problem = tiny(10 + seed)
    g = path_graph(8)
    grid = tuple(default_lambda_grid(problem, size=8, ratio=1e-2))
    base = dict(lambda_grid=grid, gamma_grid=(0.0, 0.5, 2.0), seed=seed)
    warm = cross_validate(problem, g, CVConfig(**base), "gppl", TIGHT, refit=False)
    cold = cross_validate(problem, g, CVConfig(warm_start=False, **base), "gppl", TIGHT, refit=False)
    assert warm.best == cold.best


def test_grid_order_invariance():
    problem = tiny(5)
    g = path_graph(8)
    a = cross_validate(problem, g, CVConfig(lambda_grid=(0.1,), gamma_grid=(0.0, 2.0)), "gppl",
                       TIGHT, refit=False)
    b = cross_validate(problem, g, CVConfig(lambda_grid=(0.1,), gamma_grid=(2.0, 0.0)), "gppl",
                       TIGHT, refit=False)
    assert np.allclose(a.cv_errors[0, :, 0], b.cv_errors[0, ::-1, 0], rtol=1e-6)
    assert a.best == b.best


def test_lasso_ignores_gamma_and_k():
    res = cross_validate(tiny(6), None, CVConfig(lambda_grid=(0.2, 0.05), gamma_grid=(0.0, 1.0),
                                                 k_candidates=(0, 3)), "lasso")
    assert res.cv_errors.shape == (1, 1, 2)
    assert res.best[1] == 0.0 and res.best[2] == 0


def test_report_json():
    res = cross_validate(tiny(7), None, CVConfig(lambda_grid=(0.2, 0.05), seed=9), "lasso")
    d = res.to_dict()
    assert d["seed"] == 9 and len(d["fold_errors"]) == 5
    assert set(d["best"]) == {"lambda", "lambda_g", "k"}


def test_too_many_folds():
    with pytest.raises(ValueError):
        cross_validate(tiny(8, N=4), None, CVConfig(lambda_grid=(0.1,)), "lasso")
