"""Gradient-enhanced physics-informed neural networks.

Small tanh networks trained to satisfy PDE residuals, with optional
penalties on the residual's coordinate derivatives and residual-based
adaptive refinement of the training points.
"""

from .autodiff import Graph, Node, grad, check_grad
from .loss import LossWeights, PointSets, build_point_sets, total_loss
from .metrics import TestGrid, l2_relative_error, sample_equispaced, sample_uniform
from .network import MlpParams, init_mlp, forward, apply_ansatz
from .optimize import RarConfig, RunResult, TrainConfig, rar_refine, train
from .problems import PROBLEMS, get_problem, observations

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "Node",
    "grad",
    "check_grad",
    "LossWeights",
    "PointSets",
    "build_point_sets",
    "total_loss",
    "TestGrid",
    "l2_relative_error",
    "sample_equispaced",
    "sample_uniform",
    "MlpParams",
    "init_mlp",
    "forward",
    "apply_ansatz",
    "RarConfig",
    "RunResult",
    "TrainConfig",
    "rar_refine",
    "train",
    "PROBLEMS",
    "get_problem",
    "observations",
    "__version__",
]
