"""Penalized least squares by ADMM.

All programs share the smooth part ``(1/2N) ||y - X beta||^2`` and differ in
the penalty:

========== ===========================================================
kind       penalty
========== ===========================================================
gppl       lambda_g ||Delta^(k+1) beta||_1 + lambda ||beta||_1
lasso      lambda ||beta||_1
smooth     lambda ||beta||_1 + lambda_g ||Delta_u^(1) beta||_2^2
spline     lambda ||beta||_1 + lambda_g ||Delta_u^(2) beta||_2^2
graph_smooth   lambda ||beta||_1 + lambda_g ||Delta^(1) beta||_2^2
graph_spline   lambda ||beta||_1 + lambda_g ||Delta^(2) beta||_2^2
========== ===========================================================

``smooth`` and ``spline`` use univariate differences along the coefficient
index and ignore the graph.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .graph import (DiffOperator, UndirectedGraph, build_diff_operator, is_path_graph,
                    univariate_diff)
from .problem import DimensionError, RegressionProblem

log = logging.getLogger(__name__)

KINDS = ("gppl", "lasso", "smooth", "spline", "graph_smooth", "graph_spline")
RIDGE_KINDS = ("smooth", "spline", "graph_smooth", "graph_spline")
GRAPH_KINDS = ("gppl", "graph_smooth", "graph_spline")

RHO_MIN, RHO_MAX = 1e-4, 1e4


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "gppl"
    lam: float = 0.0
    lam_g: float = 0.0
    k: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        if not (self.lam >= 0 and self.lam_g >= 0):
            raise ValueError("tuning parameters must be non-negative")
        if not (np.isfinite(self.lam) and np.isfinite(self.lam_g)):
            raise ValueError("tuning parameters must be finite")
        if self.k < 0:
            raise ValueError("k must be >= 0")

    @property
    def gamma(self) -> float:
        """Ratio lam_g / lam (inf when lam == 0 < lam_g)."""
        if self.lam > 0:
            return self.lam_g / self.lam
        return np.inf if self.lam_g > 0 else 0.0


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    max_iter: int = 20000
    # None selects the scale-aware default 1e-6 * max(1, ||beta||_inf)
    support_threshold: float | None = None
    adapt_rho: bool = True
    adapt_every: int = 50

    def __post_init__(self):
        if not (self.rho > 0 and self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("rho and tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.support_threshold is not None and self.support_threshold < 0:
            raise ValueError("support_threshold must be non-negative")


@dataclass
class ADMMState:
    beta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    rho: float
    scale: float  # penalty level the scaled dual u was computed at


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    support_s1: tuple
    support_s2: tuple
    penalty: PenaltySpec | None = None
    dual: np.ndarray | None = field(default=None, repr=False)
    state: ADMMState | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        pen = self.penalty
        return {
            "beta": [float(b) for b in self.beta_hat],
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "s1": [int(i) for i in self.support_s1],
            "s2": [int(i) for i in self.support_s2],
            "penalty": None if pen is None else {"kind": pen.kind, "lam": float(pen.lam),
                                                 "lam_g": float(pen.lam_g), "k": int(pen.k)},
        }


def soft_threshold(a, kappa):
    """sign(a) * max(|a| - kappa, 0), elementwise."""
    if np.any(np.asarray(kappa) < 0):
        raise ValueError("threshold must be non-negative")
    a = np.asarray(a, dtype=float)
    out = np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)
    return float(out) if out.ndim == 0 else out


def _storage(mat):
    """CSR unless the matrix is small or more than a quarter full."""
    mat = sp.csr_matrix(mat, dtype=float)
    n = mat.shape[1]
    fill = mat.nnz / max(1, mat.shape[0] * n)
    if n < 64 or fill > 0.25:
        return mat.toarray()
    return mat


def build_D(op: DiffOperator, gamma: float) -> sp.csr_matrix:
    """Stack ``gamma * Delta`` over the identity; full column rank for every gamma."""
    if not np.isfinite(gamma):
        raise ValueError("gamma must be finite")
    return sp.vstack([gamma * op.matrix.astype(float), sp.identity(op.n, format="csr")],
                     format="csr")


class PseudoInverse:
    """Left inverse ``(D^T D)^{-1} D^T`` of a full-column-rank matrix, with a cached Cholesky factor."""

    def __init__(self, D):
        self.D = D
        DtD = D.T @ D
        DtD = DtD.toarray() if sp.issparse(DtD) else np.asarray(DtD)
        try:
            self._factor = la.cho_factor(DtD, lower=True)
        except la.LinAlgError as exc:
            raise RuntimeError("D^T D is numerically singular; D must have full column rank") from exc

    def __call__(self, V):
        return la.cho_solve(self._factor, self.D.T @ V)


def apply_pseudo_inverse(D, V):
    return PseudoInverse(D)(V)


def penalty_operator(penalty: PenaltySpec, graph: UndirectedGraph | None, n: int):
    """The matrix inside the second penalty term for ``penalty.kind`` (None for lasso)."""
    kind = penalty.kind
    if kind == "lasso":
        return None
    if kind in ("smooth", "spline"):
        order = 1 if kind == "smooth" else 2
        return sp.csr_matrix(univariate_diff(n, order))
    if graph is None:
        raise ValueError(f"penalty kind {kind!r} requires a graph")
    if graph.n != n:
        raise DimensionError(f"graph has {graph.n} nodes but the design has {n} columns")
    k = penalty.k if kind == "gppl" else (0 if kind == "graph_smooth" else 1)
    return build_diff_operator(graph, k).matrix


def objective(problem: RegressionProblem, penalty: PenaltySpec, beta, graph=None, A=None) -> float:
    beta = np.asarray(beta, dtype=float)
    r = problem.y - problem.X @ beta
    val = 0.5 * (r @ r) / problem.N + penalty.lam * np.abs(beta).sum()
    if penalty.kind == "lasso" or penalty.lam_g == 0:
        return float(val)
    if A is None:
        A = penalty_operator(penalty, graph, problem.n)
    Ab = A @ beta
    if penalty.kind == "gppl":
        return float(val + penalty.lam_g * np.abs(Ab).sum())
    return float(val + penalty.lam_g * (Ab @ Ab))


class _Program:
    """min 1/2 b'Qb - c'b + sum_i w_i |(D b)_i| in ADMM-ready form."""

    def __init__(self, Q, c, D, weights):
        self.Q = Q
        self.c = c
        self.D = _storage(D)
        self.DT = self.D.T.copy() if not sp.issparse(self.D) else self.D.T.tocsr()
        self.weights = weights
        DtD = self.DT @ self.D
        self.DtD = DtD.toarray() if sp.issparse(DtD) else DtD
        self._factors: dict[float, tuple] = {}

    @property
    def m(self):
        return self.D.shape[0]

    def solve(self, rhs, rho):
        fac = self._factors.get(rho)
        if fac is None:
            M = self.Q + rho * self.DtD
            try:
                fac = ("chol", la.cho_factor(M, lower=True, check_finite=False))
            except la.LinAlgError:
                fac = ("lstsq", M)
            self._factors[rho] = fac
        if fac[0] == "chol":
            return la.cho_solve(fac[1], rhs, check_finite=False)
        return np.linalg.lstsq(fac[1], rhs, rcond=None)[0]

    def value(self, b):
        return 0.5 * b @ (self.Q @ b) - self.c @ b + self.weights @ np.abs(self.D @ b)


def _admm(prog: _Program, config: SolverConfig, state: ADMMState | None, scale: float):
    n, m = prog.Q.shape[0], prog.m
    D, DT, w = prog.D, prog.DT, prog.weights
    if state is None:
        beta = np.zeros(n)
        z = np.zeros(m)
        u = np.zeros(m)
        rho = config.rho
    else:
        beta, z, rho = state.beta.copy(), state.z.copy(), state.rho
        # the scaled dual tracks the penalty level
        ratio = scale / state.scale if state.scale > 0 else 0.0
        u = state.u * ratio
    sqrt_m, sqrt_n = np.sqrt(m), np.sqrt(n)
    best = (np.inf, beta, 0.0, np.inf)
    r_norm = s_norm = np.inf
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        beta = prog.solve(prog.c + rho * (DT @ (z - u)), rho)
        Db = D @ beta
        z_old = z
        v = Db + u
        z = np.sign(v) * np.maximum(np.abs(v) - w / rho, 0.0)
        u = v - z
        r_norm = np.linalg.norm(Db - z)
        s_norm = rho * np.linalg.norm(DT @ (z - z_old))
        eps_pri = sqrt_m * config.eps_abs + config.eps_rel * max(np.linalg.norm(Db), np.linalg.norm(z))
        eps_dual = sqrt_n * config.eps_abs + config.eps_rel * rho * np.linalg.norm(DT @ u)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if it % config.adapt_every == 0:
            obj = prog.value(beta)
            if obj < best[0]:
                best = (obj, beta, r_norm, s_norm)
            if config.adapt_rho:
                new_rho = rho
                if r_norm > 10 * s_norm:
                    new_rho = min(2 * rho, RHO_MAX)
                elif s_norm > 10 * r_norm:
                    new_rho = max(rho / 2, RHO_MIN)
                if new_rho != rho:
                    u = u * (rho / new_rho)
                    rho = new_rho
    if not converged and prog.value(beta) > best[0]:
        log.warning("ADMM did not converge in %d iterations; returning best iterate", it)
        _, beta, r_norm, s_norm = best
    elif not converged:
        log.warning("ADMM did not converge in %d iterations", it)
    state = ADMMState(beta, z, u, rho, scale)
    return beta, it, r_norm, s_norm, converged, state


def _min_norm_ls(X, y):
    return np.linalg.lstsq(X, y, rcond=None)[0]


def fit(problem: RegressionProblem, graph: UndirectedGraph | None, penalty: PenaltySpec,
        config: SolverConfig | None = None, warm_start=None) -> FitResult:
    """Minimize ``(1/2N) ||y - X beta||^2 + penalty`` by ADMM.

    Parameters
    ----------
    problem : RegressionProblem
    graph : UndirectedGraph or None
        Required for ``gppl``, ``graph_smooth`` and ``graph_spline``.
    penalty : PenaltySpec
    config : SolverConfig, optional
    warm_start : ndarray or FitResult, optional
        A coefficient vector, or a previous fit of the same kind, order and
        ``lam_g / lam`` ratio whose ADMM state (including the dual) is reused.

    Returns
    -------
    FitResult
        ``dual`` holds the multiplier ``v`` of the l1 term in the split form
        (``v = rho * u``), used by :func:`kkt_residuals`.
    """
    config = config or SolverConfig()
    X, y, N, n = problem.X, problem.y, problem.N, problem.n
    A = penalty_operator(penalty, graph, n)
    Xty = X.T @ y / N
    Q = X.T @ X / N
    lam, lam_g = penalty.lam, penalty.lam_g

    if penalty.kind in RIDGE_KINDS and lam_g > 0:
        A_dense = A.toarray().astype(float)
        Q = Q + 2 * lam_g * (A_dense.T @ A_dense)

    # choose the l1 operator and weights
    if penalty.kind == "gppl" and lam_g > 0 and lam > 0:
        D = build_D(DiffOperator(penalty.k, A), lam_g / lam)
        weights, scale = np.full(D.shape[0], lam), lam
    elif penalty.kind == "gppl" and lam_g > 0:
        D = A.astype(float)
        weights, scale = np.full(D.shape[0], lam_g), lam_g
    elif lam > 0:
        # lasso, or a ridge kind after folding, or gppl with lam_g = 0 (zero rows of D dropped)
        D = sp.identity(n, format="csr")
        weights, scale = np.full(n, lam), lam
    else:
        D = None

    if D is None:
        if penalty.kind in RIDGE_KINDS and lam_g > 0:
            Xa = np.vstack([X, np.sqrt(2 * N * lam_g) * A.toarray()])
            beta = _min_norm_ls(Xa, np.concatenate([y, np.zeros(A.shape[0])]))
        else:
            beta = _min_norm_ls(X, y)
        return _finish(problem, graph, penalty, config, A, beta, 0, 0.0, 0.0, True,
                       np.zeros(0), None)

    prog = _Program(Q, Xty, D, weights)
    state = None
    if isinstance(warm_start, FitResult):
        st = warm_start.state
        if st is not None and st.z.shape == (prog.m,):
            state = st
        else:
            warm_start = warm_start.beta_hat
    if state is None and warm_start is not None:
        b0 = np.asarray(warm_start, dtype=float)
        if b0.shape != (n,):
            raise DimensionError("warm start has the wrong length")
        Db = prog.D @ b0
        state = ADMMState(b0, Db, np.zeros(prog.m), config.rho, scale)
    beta, it, r, s, conv, state = _admm(prog, config, state, scale)
    return _finish(problem, graph, penalty, config, A, beta, it, r, s, conv,
                   state.rho * state.u, state)


def _finish(problem, graph, penalty, config, A, beta, it, r, s, conv, dual, state):
    thr = support_threshold(beta, config)
    if A is not None and penalty.kind in GRAPH_KINDS:
        s1 = tuple(np.flatnonzero(np.abs(A @ beta) > thr).tolist())
    else:
        s1 = ()
    s2 = tuple(np.flatnonzero(np.abs(beta) > thr).tolist())
    obj = objective(problem, penalty, beta, graph, A)
    return FitResult(beta, obj, it, float(r), float(s), bool(conv), s1, s2,
                     penalty, dual, state)


def support_threshold(beta, config: SolverConfig | None = None) -> float:
    if config is not None and config.support_threshold is not None:
        return config.support_threshold
    return 1e-6 * max(1.0, float(np.max(np.abs(beta), initial=0.0)))


def kkt_residuals(problem: RegressionProblem, graph, result: FitResult,
                  config: SolverConfig | None = None) -> dict:
    """Subgradient optimality certificate for a ``gppl`` or ``lasso`` fit.

    Returns the stationarity residual ``||(1/N) X'(X b - y) + D'v||_inf``, its
    bound ``1e-5 * (1 + ||X'y/N||_inf)``, the worst box violation of ``v`` and
    the worst sign mismatch on the active rows of ``D b``.
    """
    penalty = result.penalty
    if penalty is None or penalty.kind not in ("gppl", "lasso"):
        raise ValueError("certificate is defined for gppl and lasso fits")
    X, y, N, n = problem.X, problem.y, problem.N, problem.n
    beta, v = result.beta_hat, result.dual
    lam, lam_g = penalty.lam, penalty.lam_g
    if penalty.kind == "gppl" and lam_g > 0:
        A = penalty_operator(penalty, graph, n)
        if lam > 0:
            D, level = build_D(DiffOperator(penalty.k, A), lam_g / lam), lam
        else:
            D, level = A.astype(float), lam_g
    else:
        D, level = sp.identity(n, format="csr"), lam
    grad = X.T @ (X @ beta - y) / N
    stat = np.max(np.abs(grad + D.T @ v), initial=0.0)
    Db = D @ beta
    thr = support_threshold(beta, config)
    active = np.abs(Db) > thr
    sign_gap = np.max(np.abs(v[active] - level * np.sign(Db[active])), initial=0.0)
    return {
        "stationarity": float(stat),
        "stationarity_bound": float(1e-5 * (1 + np.max(np.abs(X.T @ y / N)))),
        "box_violation": float(max(0.0, np.max(np.abs(v), initial=0.0) - level)),
        "sign_violation": float(sign_gap),
        "level": float(level),
    }


def fused_lasso_equivalence_check(problem: RegressionProblem, graph: UndirectedGraph,
                                  penalty: PenaltySpec, config: SolverConfig | None = None,
                                  rtol: float = 1e-6) -> bool:
    """Compare the k = 0 graph program on a path with a direct fused-lasso formulation.

    The direct form splits ``[Delta_u^(1); I] beta`` with per-row weights
    ``(lam_g, ..., lam, ...)`` instead of the single-level ``lam ||D beta||_1``.
    """
    if graph is None or not is_path_graph(graph):
        raise ValueError("fused-lasso equivalence needs a path graph")
    if penalty.kind != "gppl" or penalty.k != 0:
        raise ValueError("fused-lasso equivalence needs kind='gppl' and k=0")
    config = config or SolverConfig()
    ours = fit(problem, graph, penalty, config)
    X, y, N, n = problem.X, problem.y, problem.N, problem.n
    Du = sp.csr_matrix(univariate_diff(n, 1).astype(float))
    D = sp.vstack([Du, sp.identity(n, format="csr")], format="csr")
    w = np.concatenate([np.full(n - 1, penalty.lam_g), np.full(n, penalty.lam)])
    if not np.any(w > 0):
        direct = _min_norm_ls(X, y)
    else:
        keep = w > 0
        prog = _Program(X.T @ X / N, X.T @ y / N, D[keep], w[keep])
        direct = _admm(prog, config, None, float(w.max()))[0]
    f_ours = objective(problem, penalty, ours.beta_hat, graph)
    f_direct = objective(problem, penalty, direct, graph)
    return bool(abs(f_ours - f_direct) <= rtol * max(1.0, abs(f_direct)))


def with_tuning(penalty: PenaltySpec, **kw) -> PenaltySpec:
    return replace(penalty, **kw)
