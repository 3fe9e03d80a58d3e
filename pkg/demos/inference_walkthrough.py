"""Confidence intervals and an edge test from a one-step corrected fit.

A 30-node path carries two flat blocks; the design is wider than usual
relative to N so the CLIME surrogate matters. Run: python3 demos/inference_walkthrough.py
"""
import numpy as np

from gppl import (GramMatrix, PenaltySpec, RegressionProblem, clime_fit, confidence_intervals,
                  default_mu, fit, one_step, path_graph, test_edge)

rng = np.random.default_rng(3)
N, n = 120, 30
X = rng.standard_normal((N, n))
beta_star = np.zeros(n)
beta_star[5:12], beta_star[20:24] = 1.0, -0.8
y = X @ beta_star + 0.3 * rng.standard_normal(N)
problem, graph = RegressionProblem(X, y), path_graph(n)

res = fit(problem, graph, PenaltySpec("gppl", 0.02, 0.05, 0))
gram = GramMatrix.from_design(X)
theta = clime_fit(gram, default_mu(0.05, n, N))
beta_tilde = one_step(res.beta_hat, theta, problem)
report = confidence_intervals(beta_tilde, theta, gram, "estimate", 0.05, problem, res.beta_hat)

print(f"sigma estimate {report.sigma_used:.3f} (true 0.3), CLIME feasibility {theta.feasibility:.4f}")
covered = (report.intervals[:, 0] <= beta_star) & (beta_star <= report.intervals[:, 1])
print(f"intervals covering the truth: {covered.sum()} of {n}")
for j in (4, 5, 11, 12):
    lo, hi = report.intervals[j]
    print(f"  beta[{j:2d}] true {beta_star[j]:+.2f}  interval [{lo:+.3f}, {hi:+.3f}]")
for e in (4, 8):  # edge 4 joins nodes 4-5 (a jump), edge 8 lies inside a block
    t = test_edge(e, graph, beta_tilde, theta, gram, report.sigma_used)
    print(f"edge {e}: statistic {t.statistic:+.2f}, p = {t.p_value:.3g}, reject {t.reject}")
