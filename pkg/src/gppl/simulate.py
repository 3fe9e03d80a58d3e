"""Synthetic regression scenarios over a 250-node path and a 25 x 25 grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import UndirectedGraph, grid_graph, path_graph
from .normal import standard_normal, stream
from .problem import RegressionProblem

FAMILIES = ("path_250", "grid_25x25")
# default noise: variance 0.1
DEFAULT_SIGMA_EPS = float(np.sqrt(0.1))
# order k matched to each scenario's structure (scenario 4 has none)
SCENARIO_ORDER = {1: 0, 2: 1, 3: 2}

_DESIGN_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class ScenarioSpec:
    family: str
    scenario: int
    N: int
    sigma_eps: float = DEFAULT_SIGMA_EPS
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.scenario not in (1, 2, 3, 4):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be >= 0")


@dataclass(frozen=True)
class SyntheticDataset:
    problem: RegressionProblem
    beta_star: np.ndarray
    epsilon: np.ndarray
    graph: UndirectedGraph


def _in(j, *ranges):
    out = np.zeros(j.shape, dtype=bool)
    for lo, hi in ranges:
        out |= (j >= lo) & (j <= hi)
    return out


def path_beta_star(scenario: int, n: int = 250) -> np.ndarray:
    j = np.arange(1, n + 1)
    beta = np.zeros(n)
    if scenario == 1:
        for (lo, hi), v in zip([(101, 110), (111, 120), (121, 130), (131, 140), (141, 150)],
                               [-1.0, 1.0, -2.0, 2.0, 1.5]):
            beta[_in(j, (lo, hi))] = v
    elif scenario in (2, 4):
        m = _in(j, (1, 10), (50, 60), (100, 110), (150, 160), (200, 210))
        if scenario == 2:
            beta[m] = np.abs(j[m] % 25 - 10) / 5 - 1
        else:
            beta[m] = np.sin(j[m] / 10) + np.cos(j[m] / 3)
    elif scenario == 3:
        up = _in(j, (5, 15), (105, 115), (205, 215))
        down = _in(j, (55, 65), (155, 165))
        beta[up] = (j[up] % 50 - 10) ** 2 / 50 - 1
        beta[down] = -((j[down] % 50 - 10) ** 2) / 50 + 1
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return beta


def grid_coefficients(scenario: int, size: int = 25) -> np.ndarray:
    """The coefficient matrix B (rows i, columns j, 1-based formulas)."""
    i, j = np.meshgrid(np.arange(1, size + 1), np.arange(1, size + 1), indexing="ij")
    i = i.astype(float)
    j = j.astype(float)

    def box(r, c):
        return (i >= r[0]) & (i <= r[1]) & (j >= c[0]) & (j <= c[1])

    B = np.zeros((size, size))
    if scenario == 1:
        B[box((9, 13), (13, 17))] = 0.5
        B[box((9, 13), (9, 12))] = -1.0
        B[box((14, 17), (9, 12))] = 1.0
        B[box((14, 17), (13, 17))] = -0.5
    elif scenario == 2:
        m = box((9, 13), (13, 17))
        B[m] = 0.1 * (i[m] + j[m]) - 2.6
        m = box((9, 13), (9, 12))
        B[m] = 2.6 - 0.1 * (i[m] + j[m])
        m = box((14, 17), (9, 17))
        B[m] = 0.1 * (j[m] - i[m])
    elif scenario == 3:
        for rows, sign in (((9, 13), 1.0), ((14, 17), -1.0)):
            m = box(rows, (1, 12))
            B[m] = sign * 0.7 * (0.1 * j[m] - 0.7) ** 2
            m = box(rows, (13, 25))
            B[m] = sign * 0.7 * (0.1 * j[m] - 1.9) ** 2
    elif scenario == 4:
        m = box((9, 17), (1, 25))
        a, b = 0.1 * j[m] - 1.3, 0.1 * i[m] - 1.3
        B[m] = (np.sin(a / 8) - np.cos(b / 10) + 2 * np.sin(a / 2 - b)
                - np.cos(0.1 * (i[m] + j[m]) - 2.6) + 2)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return B


def scenario_graph(family: str) -> UndirectedGraph:
    if family == "path_250":
        return path_graph(250)
    if family == "grid_25x25":
        return grid_graph(25, 25)
    raise ValueError(f"unknown family {family!r}")


def make_beta_star(spec: ScenarioSpec) -> np.ndarray:
    if spec.family == "path_250":
        return path_beta_star(spec.scenario)
    # stack the columns of B
    return grid_coefficients(spec.scenario).ravel(order="F")


def gaussian_design(N: int, n: int, seed: int) -> np.ndarray:
    """N x n matrix with i.i.d. N(0, 1) entries."""
    return standard_normal(stream(seed, _DESIGN_STREAM), (N, n))


def gaussian_noise(N: int, sigma_eps: float, seed: int, replicate: int = 0) -> np.ndarray:
    """Noise vector; ``replicate`` selects an independent sub-stream for repeated draws."""
    return sigma_eps * standard_normal(stream(seed, _NOISE_STREAM, replicate), N)


def make_dataset(spec: ScenarioSpec) -> SyntheticDataset:
    graph = scenario_graph(spec.family)
    beta_star = make_beta_star(spec)
    X = gaussian_design(spec.N, graph.n, spec.seed)
    eps = gaussian_noise(spec.N, spec.sigma_eps, spec.seed)
    y = X @ beta_star + eps
    return SyntheticDataset(RegressionProblem(X, y), beta_star, eps, graph)
