"""Traffic graph convolutional LSTM forecasting package."""

__version__ = "0.1.0"
__description__ = "Network-scale traffic speed forecasting with a traffic graph convolutional LSTM"

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import GraphConfig, ModelConfig, OptimizerConfig, TrainConfig, load_config
from .data import (
    SpeedDataset, WindowedSample, WindowSplit, denormalize, generate_synthetic,
    impute_missing, load_speed_csv, make_windows, normalize, save_speed_csv
)
from .graph import TrafficGraph, build_graph_matrices, load_topology
from .metrics import MetricsResult, evaluate, export_avg_weights
from .models import ModelKind, build_model
from .training import TrainReport, total_loss, train

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "GraphConfig", "ModelConfig", "OptimizerConfig", "TrainConfig", "load_config",
    "SpeedDataset", "WindowedSample", "WindowSplit", "denormalize", "generate_synthetic",
    "impute_missing", "load_speed_csv", "make_windows", "normalize", "save_speed_csv",
    "TrafficGraph", "build_graph_matrices", "load_topology",
    "MetricsResult", "evaluate", "export_avg_weights",
    "ModelKind", "build_model",
    "TrainReport", "total_loss", "train",
]
