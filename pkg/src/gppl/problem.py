from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Array shapes that do not fit together."""


@dataclass(frozen=True)
class RegressionProblem:
    """Design matrix ``X`` (N x n) and response ``y`` (length N)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a non-empty 2d array, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DimensionError(f"y has {y.shape[0]} entries but X has {X.shape[0]} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "RegressionProblem":
        return RegressionProblem(self.X[rows], self.y[rows])
