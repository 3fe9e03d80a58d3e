"""Penalized regression over graphs with piecewise-polynomial structure, plus one-step inference."""
from .clime import GramMatrix, clime_fit, default_mu
from .cv import CVConfig, cross_validate
from .graph import UndirectedGraph, build_diff_operator, grid_graph, path_graph
from .inference import confidence_intervals, one_step, test_coordinate, test_edge
from .problem import RegressionProblem
from .solver import PenaltySpec, SolverConfig, fit

__version__ = "0.1.0"

__all__ = ["CVConfig", "GramMatrix", "PenaltySpec", "RegressionProblem", "SolverConfig",
           "UndirectedGraph", "build_diff_operator", "clime_fit", "confidence_intervals",
           "cross_validate", "default_mu", "fit", "grid_graph", "one_step", "path_graph",
           "test_coordinate", "test_edge"]
