"""Group-aware pedestrian trajectory forecasting on the ETH/UCY benchmarks."""

from .coherence import GroupLabeling, NOISE, hybrid_label
from .errors import ConfigError, ContractViolation, DuplicateRecordError, ParseError, TrajGroupError
from .evaluation import best_of_n, discrete_frechet, displacement_errors
from .params import ModelDims, ParameterSet, load_checkpoint, save_checkpoint
from .training import TrainConfig, train
from .trajdata import Dataset, TrajectoryWindow, build_windows, parse_dataset

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractViolation",
    "Dataset",
    "DuplicateRecordError",
    "GroupLabeling",
    "ModelDims",
    "NOISE",
    "ParameterSet",
    "ParseError",
    "TrainConfig",
    "TrajGroupError",
    "TrajectoryWindow",
    "best_of_n",
    "build_windows",
    "discrete_frechet",
    "displacement_errors",
    "hybrid_label",
    "load_checkpoint",
    "parse_dataset",
    "save_checkpoint",
    "train",
]
