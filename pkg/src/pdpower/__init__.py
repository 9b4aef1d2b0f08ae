"""Primal-dual learning of centralized and backhaul-limited distributed power control."""
from .autodiff import Tensor
from .distributed import DistributedPolicy, Topology, train_distributed
from .harness import ExperimentConfig, ResultTable, emit, load_config, run_experiment
from .mlp import Architecture, FeasibleSet, InputTransform, Mlp
from .problems import CMACProblem, IFCProblem, make_problem
from .trainer import CentralizedPolicy, TrainConfig, evaluate, train

__all__ = [
    "Tensor", "DistributedPolicy", "Topology", "train_distributed", "ExperimentConfig", "ResultTable",
    "emit", "load_config", "run_experiment", "Architecture", "FeasibleSet", "InputTransform", "Mlp",
    "CMACProblem", "IFCProblem", "make_problem", "CentralizedPolicy", "TrainConfig", "evaluate", "train",
]
__version__ = "0.1.0"
