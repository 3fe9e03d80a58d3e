"""CLIME: row-wise l1-minimal approximate inverse of a Gram matrix.

Each row solves::

    minimize ||theta||_1  subject to  ||Sigma theta - e_i||_inf <= mu

by ADMM on the split ``theta = phi`` (l1 part), ``Sigma theta - e_i = w``
(box part). The theta-update applies ``(I + Sigma^2)^-1``, computed once and
shared by all rows. ADMM iterates are then polished: the support of ``phi``
and the active constraints give a vertex of the linear program, which is
accepted only when it is primal feasible and a dual point certifies a zero
duality gap.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import linprog

log = logging.getLogger(__name__)


class ClimeConvergenceError(RuntimeError):
    def __init__(self, row: int, message: str):
        super().__init__(f"CLIME row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class GramMatrix:
    """``X'X / N`` plus an optional diagonal ``ridge``.

    With ``N < n`` the plain Gram matrix is singular and the row programs can
    be infeasible for small ``mu``; a positive ``ridge`` makes every ``mu > 0``
    feasible.
    """

    sigma_N: np.ndarray = field(repr=False)
    N: int
    ridge: float = 0.0

    def __post_init__(self):
        S = np.asarray(self.sigma_N, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("Gram matrix must be square")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("Gram matrix must be symmetric")
        S = 0.5 * (S + S.T)
        S.setflags(write=False)
        object.__setattr__(self, "sigma_N", S)

    @classmethod
    def from_design(cls, X, ridge: float = 0.0) -> "GramMatrix":
        X = np.asarray(X, dtype=float)
        N, n = X.shape
        return cls(X.T @ X / N + ridge * np.eye(n), N, ridge)

    @property
    def n(self) -> int:
        return self.sigma_N.shape[0]

    @property
    def unridged(self) -> np.ndarray:
        """``X'X / N`` without the ridge term."""
        if self.ridge == 0:
            return self.sigma_N
        return self.sigma_N - self.ridge * np.eye(self.n)


def default_mu(c: float, n: int, N: int) -> float:
    """``c * sqrt(log(n) / N)``."""
    return c * np.sqrt(np.log(n) / N)


@dataclass(frozen=True)
class ClimeConfig:
    rho: float = 100.0
    eps_abs: float = 1e-7
    eps_rel: float = 1e-5
    max_iter: int = 50000
    check_every: int = 50
    polish: bool = True
    feasibility_tol: float = 1e-7
    # solve rows that ADMM leaves uncertified as a linear program
    lp_fallback: bool = True

    def __post_init__(self):
        if not (self.rho > 0 and self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("rho and tolerances must be positive")
        if self.max_iter < 1 or self.check_every < 1:
            raise ValueError("iteration counts must be positive")


@dataclass(frozen=True)
class RowSolution:
    theta: np.ndarray
    iterations: int
    polished: bool
    feasibility: float
    gap: float


@dataclass(frozen=True)
class PrecisionSurrogate:
    theta_hat: np.ndarray = field(repr=False)
    mu: float
    feasibility: float
    l1_norms: np.ndarray = field(repr=False)
    iterations: np.ndarray = field(repr=False)
    polished: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mu": float(self.mu),
            "feasibility": float(self.feasibility),
            "l1_norms": [float(v) for v in self.l1_norms],
            "iterations": [int(v) for v in self.iterations],
        }


class _RowSolver:
    def __init__(self, sigma: GramMatrix, config: ClimeConfig):
        S = sigma.sigma_N
        self.S = S
        self.n = S.shape[0]
        self.config = config
        factor = la.cho_factor(np.eye(self.n) + S @ S, lower=True)
        # explicit inverse operators: two mat-vecs per iteration beat two triangular solves
        self._P = la.cho_solve(factor, np.eye(self.n))
        self._PS = self._P @ S
        self._failed: set = set()

    def _polish(self, e, phi, pre, mu, extra=3, max_missing=3):
        """Try LP vertices suggested by the current iterate.

        Rows with ``|pre| >= mu`` are taken as active. A vertex needs as many
        active rows as support entries, so a shortfall is closed either by
        adding the next closest rows or by dropping the smallest support
        entries, which ADMM shrinks to zero only slowly.
        """
        order = np.argsort(-np.abs(pre), kind="stable")
        n_clipped = int(np.count_nonzero(np.abs(pre) >= mu))
        T = np.flatnonzero(phi)
        missing = T.size - n_clipped
        clipped = order[:n_clipped]
        candidates = []
        if missing <= 0:
            candidates.append((T, order[:max(n_clipped, 1)]))
        elif missing <= max_missing:
            pool = order[n_clipped:n_clipped + missing + extra]
            candidates += [(T, np.concatenate([clipped, list(c)]))
                           for c in itertools.combinations(pool, missing)]
            weak = T[np.argsort(np.abs(phi[T]), kind="stable")[:missing + extra]]
            candidates += [(np.setdiff1d(T, list(c)), clipped)
                           for c in itertools.combinations(weak, missing)]
        else:
            return None
        for T_c, A in candidates:
            found = self._vertex(e, T_c, A, np.sign(pre[A]), mu)
            if found is not None:
                return found
        return None

    def _vertex(self, e, T, A, signs, mu):
        """Solve the vertex system for support T and active rows A; None if uncertified."""
        S = self.S
        A = np.asarray(A, dtype=np.intp)
        if T.size == 0 or A.size == 0:
            return None
        key = (T.tobytes(), A.tobytes(), signs.tobytes())
        if key in self._failed:
            return None
        M = S[np.ix_(A, T)]
        rhs = e[A] + mu * signs
        lu = None
        if M.shape[0] == M.shape[1]:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", la.LinAlgWarning)
                    lu = la.lu_factor(M, check_finite=False)
            except (la.LinAlgError, la.LinAlgWarning):
                lu = None
        theta_T = (la.lu_solve(lu, rhs, check_finite=False) if lu is not None
                   else np.linalg.lstsq(M, rhs, rcond=None)[0])
        theta = np.zeros(self.n)
        theta[T] = theta_T
        infeas = np.abs(S @ theta - e).max() - mu
        if infeas > 1e-9:
            self._failed.add(key)
            return None
        dual = np.zeros(self.n)
        dual[A] = (la.lu_solve(lu, np.sign(theta_T), trans=1, check_finite=False) if lu is not None
                   else np.linalg.lstsq(M.T, np.sign(theta_T), rcond=None)[0])
        dual /= max(1.0, np.abs(S @ dual).max())
        l1 = np.abs(theta).sum()
        gap = l1 - (e @ dual - mu * np.abs(dual).sum())
        if gap > 1e-9 * max(1.0, l1):
            self._failed.add(key)
            return None
        return theta, max(infeas, 0.0), max(gap, 0.0)

    def solve(self, i: int, mu: float) -> RowSolution:
        S, n, cfg = self.S, self.n, self.config
        e = np.zeros(n)
        e[i] = 1.0
        if mu >= 1.0:
            # theta = 0 is feasible and has the smallest possible norm
            return RowSolution(np.zeros(n), 0, True, max(0.0, 1.0 - mu), 0.0)
        rho = cfg.rho
        phi = np.zeros(n)
        w = np.clip(-e, -mu, mu)
        u1 = np.zeros(n)
        u2 = np.zeros(n)
        pattern = None
        sqrt_2n, sqrt_n = np.sqrt(2 * n), np.sqrt(n)
        for it in range(1, cfg.max_iter + 1):
            theta = self._P @ (phi - u1) + self._PS @ (w + e - u2)
            St = S @ theta
            phi_old, w_old = phi, w
            a = theta + u1
            phi = np.sign(a) * np.maximum(np.abs(a) - 1.0 / rho, 0.0)
            pre = St - e + u2
            w = np.clip(pre, -mu, mu)
            r1 = theta - phi
            r2 = St - e - w
            u1 += r1
            u2 += r2
            if it % cfg.check_every:
                continue
            if cfg.polish:
                key = (np.sign(phi).tobytes(), (np.abs(pre) >= mu).tobytes())
                if key == pattern:
                    found = self._polish(e, phi, pre, mu)
                    if found is not None:
                        return RowSolution(found[0], it, True, found[1], found[2])
                pattern = key
            r = np.sqrt(r1 @ r1 + r2 @ r2)
            s = rho * np.linalg.norm((phi - phi_old) + S @ (w - w_old))
            eps_pri = sqrt_2n * cfg.eps_abs + cfg.eps_rel * max(
                np.sqrt(theta @ theta + St @ St), np.sqrt(phi @ phi + (w + e) @ (w + e)))
            eps_dual = sqrt_n * cfg.eps_abs + cfg.eps_rel * rho * np.linalg.norm(u1 + S @ u2)
            infeas = np.abs(S @ phi - e).max() - mu
            if r <= eps_pri and s <= eps_dual and infeas <= cfg.feasibility_tol:
                return RowSolution(phi, it, False, max(infeas, 0.0), np.nan)
        if cfg.lp_fallback:
            return self._solve_lp(i, e, mu, cfg.max_iter)
        raise ClimeConvergenceError(
            i, f"no convergence in {cfg.max_iter} iterations (mu={mu:g} may be infeasible)")

    def _solve_lp(self, i, e, mu, iterations):
        """Split form theta = a - b, a, b >= 0, solved with HiGHS."""
        S, n = self.S, self.n
        A_ub = np.block([[S, -S], [-S, S]])
        b_ub = np.concatenate([e + mu, mu - e])
        res = linprog(np.ones(2 * n), A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
        if res.status != 0:
            raise ClimeConvergenceError(i, f"linear program failed ({res.message}); "
                                           f"mu={mu:g} may be infeasible")
        theta = res.x[:n] - res.x[n:]
        infeas = float(np.abs(S @ theta - e).max() - mu)
        log.warning("CLIME row %d solved by the LP fallback", i)
        return RowSolution(theta, iterations, False, max(infeas, 0.0), np.nan)


def clime_row(sigma_N: GramMatrix, i: int, mu: float, config: ClimeConfig | None = None) -> np.ndarray:
    """Row ``i`` of the CLIME estimate."""
    return _solve_row(sigma_N, i, mu, config).theta


def _solve_row(sigma_N, i, mu, config=None, solver=None) -> RowSolution:
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not 0 <= i < sigma_N.n:
        raise IndexError(f"row {i} out of range")
    solver = solver or _RowSolver(sigma_N, config or ClimeConfig())
    return solver.solve(i, mu)


def clime_fit(sigma_N: GramMatrix, mu: float, config: ClimeConfig | None = None,
              rows=None) -> PrecisionSurrogate:
    """Assemble all rows (in the order given by ``rows``, default 0..n-1).

    The result is not symmetrized.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    n = sigma_N.n
    solver = _RowSolver(sigma_N, config or ClimeConfig())
    order = range(n) if rows is None else rows
    Theta = np.zeros((n, n))
    iters = np.zeros(n, dtype=int)
    polished = np.zeros(n, dtype=bool)
    for i in order:
        sol = solver.solve(i, mu)
        Theta[i] = sol.theta
        iters[i] = sol.iterations
        polished[i] = sol.polished
    feas = float(np.abs(Theta @ sigma_N.sigma_N - np.eye(n)).max())
    log.info("CLIME n=%d mu=%.4g feasibility=%.3g polished %d/%d rows", n, mu, feas,
             polished.sum(), n)
    return PrecisionSurrogate(Theta, float(mu), feas, np.abs(Theta).sum(axis=1), iters, polished)
