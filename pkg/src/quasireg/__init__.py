"""Global quasi-regression Monte Carlo for semi-linear parabolic PDEs.

Backward dynamic programming where each step's value function is expanded
on a Student-cosine orthonormal basis and its coefficients are plain Monte
Carlo averages over a fresh cloud of Euler paths.
"""
__version__ = "0.1.0"

from .basis import BasisContext, christoffel, cosine_eval, eval_series, phi_eval
from .bench import SinBenchmark, confidence_interval, exact_solution, make_problem, mse_metrics
from .dist import SamplingMeasure
from .engine import ProblemSpec, euler_path, lstar_bound
from .mindex import MultiIndexSet, build, cardinality_hyperbolic, cardinality_total
from .solver import (CoefficientTable, MemoryMode, RunConfig, backward_solve,
                     evaluate_solution, response, truncate)

__all__ = [
    "BasisContext", "christoffel", "cosine_eval", "eval_series", "phi_eval",
    "SinBenchmark", "confidence_interval", "exact_solution", "make_problem", "mse_metrics",
    "SamplingMeasure", "ProblemSpec", "euler_path", "lstar_bound",
    "MultiIndexSet", "build", "cardinality_hyperbolic", "cardinality_total",
    "CoefficientTable", "MemoryMode", "RunConfig", "backward_solve",
    "evaluate_solution", "response", "truncate",
]
