"""Experiment orchestration: data directory in, trained models and metrics out."""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .checkpoint import Checkpoint
from .config import ModelConfig, config_fields
from .data import (
    NormalizationRecord, SpeedDataset, WindowSplit, denormalize, impute_missing,
    load_speed_csv, make_windows, normalize
)
from .errors import DatasetError
from .graph import GraphMatrices, TrafficGraph, build_graph_matrices, connected_subgraph, load_topology
from .metrics import MetricsResult, evaluate
from .models import RecurrentForecaster, build_model
from .training import TrainReport, predict, train, weight_sparsity
from .utils.constants import (
    IMPUTE_FFILL_BFILL, NODE_ID_FILE, SPEED_FILE, SPEED_LIMIT_FILE, TOPOLOGY_FILE
)
from .utils.helpers import PathLike, make_rng

logger = logging.getLogger(__name__)


@dataclass
class PreparedData:
    """A data directory after ingestion, cleaning, scaling and windowing."""

    graph: TrafficGraph
    node_ids: List[str]
    dataset: SpeedDataset
    record: NormalizationRecord
    windows: Tuple[WindowSplit, WindowSplit, WindowSplit]

    @property
    def train(self) -> WindowSplit:
        return self.windows[0]

    @property
    def validation(self) -> WindowSplit:
        return self.windows[1]

    @property
    def test(self) -> WindowSplit:
        return self.windows[2]


def load_graph_dir(data_dir: PathLike, config: ModelConfig) -> Tuple[TrafficGraph, List[str]]:
    """Topology, node ids and optional speed limits from a data directory."""
    data_dir = Path(data_dir)
    limits = data_dir / SPEED_LIMIT_FILE
    return load_topology(data_dir / TOPOLOGY_FILE, data_dir / NODE_ID_FILE,
                         limits if limits.exists() else None, config.graph.free_flow)


def load_data_dir(data_dir: PathLike, config: ModelConfig, impute: str = IMPUTE_FFILL_BFILL,
                  subset: Optional[int] = None) -> PreparedData:
    """Read a data directory and turn it into normalized windows.

    Args:
        data_dir: Directory with topology.csv, node_ids.txt, speeds.csv
            (and optionally speed_limits.csv)
        config: Supplies T, the split fractions, Δt and the free-flow speed
        impute: Missing-value policy
        subset: Keep only a BFS-connected subset of this many nodes

    Returns:
        PreparedData
    """
    data_dir = Path(data_dir)
    graph, node_ids = load_graph_dir(data_dir, config)
    dataset = load_speed_csv(data_dir / SPEED_FILE, data_dir / NODE_ID_FILE, config.graph.delta_t_min)
    if dataset.missing_cells:
        dataset = impute_missing(dataset, impute)

    if subset is not None:
        graph, kept = connected_subgraph(graph, subset)
        dataset = dataset.select_nodes(kept)
        node_ids = [node_ids[i] for i in kept]
        logger.info("Using a %d-node connected subset", subset)

    scaled, record = normalize(dataset, config.split)
    windows = make_windows(scaled, config.seq_len, config.split)
    logger.info("Windows: %d train, %d validation, %d test",
                len(windows[0]), len(windows[1]), len(windows[2]))
    return PreparedData(graph, node_ids, scaled, record, windows)


class Experiment:
    """Builds graph matrices, trains models and scores them on one prepared dataset."""

    def __init__(self, data: PreparedData, config: ModelConfig):
        self.data = data
        self.config = config
        self._matrices: Dict[int, GraphMatrices] = {}

    def matrices(self, k: Optional[int] = None) -> GraphMatrices:
        """Graph matrices for hop order k (the configured K when None)."""
        k = k if k is not None else self.config.graph.k_hops
        if k not in self._matrices:
            graph_cfg = self.config.graph
            m = graph_cfg.m_steps if graph_cfg.m_steps is not None else k
            self._matrices[k] = build_graph_matrices(self.data.graph, k, m, graph_cfg.delta_t_min)
        return self._matrices[k]

    def checkpoint_meta(self, config: ModelConfig) -> dict:
        return {
            "config": config_fields(config),
            "node_ids": list(self.data.node_ids),
            "normalization_scale": self.data.record.scale,
            "train_rows": self.data.record.train_rows,
        }

    def train_model(self, kind: Optional[str] = None,
                    k: Optional[int] = None) -> Tuple[RecurrentForecaster, Checkpoint, TrainReport]:
        """Train one model on the train split with early stopping on validation."""
        config = self.config
        if kind is not None:
            config = replace(config, model=kind)
        if k is not None:
            config = replace(config, graph=replace(config.graph, k_hops=k))

        model = build_model(config.model, self.matrices(config.graph.k_hops), make_rng(config.train.seed))
        logger.info("Training %s (K=%d) on %d windows", model.kind, config.graph.k_hops, len(self.data.train))
        best, report = train(model, self.data.train, self.data.validation, config.train)
        best.meta.update(self.checkpoint_meta(config))
        return model, best, report

    def evaluate_model(self, model: RecurrentForecaster, split: str = "test") -> Tuple[MetricsResult, np.ndarray]:
        """Metrics in mph on a split, plus the denormalized predictions."""
        windows = {"train": self.data.train, "validation": self.data.validation, "test": self.data.test}[split]
        if model.node_count != len(self.data.node_ids):
            raise DatasetError(f"model has {model.node_count} nodes, dataset has {len(self.data.node_ids)}")
        predictions = denormalize(predict(model, windows), self.data.record)
        targets = denormalize(windows.targets, self.data.record)
        return evaluate(predictions, targets), predictions

    def test_targets(self) -> np.ndarray:
        return denormalize(self.data.test.targets, self.data.record)

    def sparsity(self, model: RecurrentForecaster) -> Optional[float]:
        return weight_sparsity(model) if model.tgc_layer is not None else None
