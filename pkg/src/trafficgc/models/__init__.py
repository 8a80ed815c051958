"""Forecasting models module."""

from enum import Enum
from typing import Optional

import numpy as np

from ..graph import GraphMatrices
from .lsgc import LSGCLayer, LSGCLSTM, laplacian, lsgc_backward, lsgc_forward, lsgc_lstm_forward
from .lstm import VanillaLSTMCell, vanilla_lstm_step
from .recurrent import LSTMCore, LSTMState, RecurrentForecaster, SequenceTape
from .tgc import TGCFeatures, TGCLayer, reg_feature_l2, reg_weight_l1, tgc_backward, tgc_forward
from .tgc_lstm import TGCLSTMCell, TGCLSTMState, cell_step


class ModelKind(Enum):
    """Selectable forecaster architectures."""
    TGC_LSTM = "tgc-lstm"
    LSTM = "lstm"
    LSGC_LSTM = "lsgc-lstm"


MODEL_CLASSES = {
    ModelKind.TGC_LSTM: TGCLSTMCell,
    ModelKind.LSTM: VanillaLSTMCell,
    ModelKind.LSGC_LSTM: LSGCLSTM,
}


def build_model(kind, matrices: GraphMatrices,
                rng: Optional[np.random.Generator] = None) -> RecurrentForecaster:
    """Create a freshly initialized model for the graph.

    Args:
        kind: ModelKind or its string value
        matrices: Graph matrices (masks for TGC, adjacency for the Laplacian)
        rng: Generator for weight initialization

    Returns:
        The model
    """
    kind = ModelKind(kind)
    if kind is ModelKind.TGC_LSTM:
        return TGCLSTMCell(matrices.masks, rng)
    if kind is ModelKind.LSGC_LSTM:
        return LSGCLSTM(laplacian(matrices.adjacency), matrices.order, rng)
    return VanillaLSTMCell(matrices.node_count, rng)


__all__ = [
    "ModelKind", "MODEL_CLASSES", "build_model",
    "RecurrentForecaster", "LSTMCore", "LSTMState", "SequenceTape",
    "TGCLayer", "TGCFeatures", "tgc_forward", "tgc_backward", "reg_weight_l1", "reg_feature_l2",
    "TGCLSTMCell", "TGCLSTMState", "cell_step",
    "VanillaLSTMCell", "vanilla_lstm_step",
    "LSGCLayer", "LSGCLSTM", "laplacian", "lsgc_forward", "lsgc_backward", "lsgc_lstm_forward",
]
