"""Forecast metrics, result tables and the averaged TGC weight export."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ShapeError
from .models import RecurrentForecaster
from .utils.constants import MAPE_EPSILON_MPH
from .utils.helpers import PathLike, as_float_array, write_matrix_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsResult:
    """Errors in mph (MAPE in percent) over every (sample, node) cell.

    Attributes:
        mae: Mean absolute error
        mape: Mean absolute percentage error over cells with y > epsilon
        rmse: Root mean squared error
        samples: Number of forecast rows
        per_node_mae: MAE of each node, length N
        mae_std: Standard deviation of the per-sample MAE
        mape_excluded: Cells left out of MAPE because y <= epsilon
    """

    mae: float
    mape: float
    rmse: float
    samples: int
    per_node_mae: np.ndarray
    mae_std: float = 0.0
    mape_excluded: int = 0


def evaluate(predictions, targets, epsilon: float = MAPE_EPSILON_MPH) -> MetricsResult:
    """MAE, MAPE and RMSE of forecasts against observations.

    Args:
        predictions: Forecast rows in mph, (samples, N) or a list of length-N vectors
        targets: Observed rows, same shape
        epsilon: Observed speeds at or below this are excluded from MAPE

    Returns:
        MetricsResult
    """
    predictions = np.atleast_2d(as_float_array(predictions, "predictions"))
    targets = np.atleast_2d(as_float_array(targets, "targets"))
    if predictions.shape != targets.shape:
        raise ShapeError(f"predictions {predictions.shape} and targets {targets.shape} differ")
    if predictions.size == 0:
        raise ValueError("cannot evaluate an empty forecast")

    error = predictions - targets
    absolute = np.abs(error)
    usable = targets > epsilon
    excluded = int(usable.size - usable.sum())
    if excluded:
        logger.warning("%d cells with observed speed <= %g mph excluded from MAPE", excluded, epsilon)
    if usable.any():
        mape = float(np.mean(absolute[usable] / targets[usable]) * 100.0)
    else:
        mape = float("nan")

    return MetricsResult(
        mae=float(np.mean(absolute)),
        mape=mape,
        rmse=float(np.sqrt(np.mean(error * error))),
        samples=targets.shape[0],
        per_node_mae=absolute.mean(axis=0),
        mae_std=float(np.std(absolute.mean(axis=1))),
        mape_excluded=excluded,
    )


def metrics_table(rows: Sequence[Tuple[str, MetricsResult]]) -> pd.DataFrame:
    """One row per labelled result, ready for printing or to_csv."""
    records = [
        {"model": label, "mae": r.mae, "mae_std": r.mae_std, "mape": r.mape,
         "rmse": r.rmse, "samples": r.samples, "mape_excluded": r.mape_excluded}
        for label, r in rows
    ]
    return pd.DataFrame(records, columns=["model", "mae", "mae_std", "mape", "rmse",
                                          "samples", "mape_excluded"])


@dataclass(frozen=True)
class AveragedWeightMatrix:
    """(1/K) * sum over hops of the masked convolution weights."""

    values: np.ndarray
    order: int

    @property
    def support(self) -> np.ndarray:
        return self.values != 0


def export_avg_weights(model: RecurrentForecaster, path: Optional[PathLike] = None,
                       node_ids: Optional[Sequence[str]] = None) -> AveragedWeightMatrix:
    """Average the masked TGC weights over hop orders.

    Args:
        model: Model with a TGC layer
        path: Optional CSV destination (node-id header and row labels)
        node_ids: Labels in graph index order (indices if None)

    Returns:
        AveragedWeightMatrix
    """
    layer = model.tgc_layer
    if layer is None:
        raise ValueError(f"{model.kind} model has no TGC layer to export")
    values = sum(w.effective() for w in layer.weights) / layer.order
    result = AveragedWeightMatrix(values, layer.order)
    if path is not None:
        ids = list(node_ids) if node_ids is not None else [str(i) for i in range(layer.node_count)]
        write_matrix_csv(values, ids, path, row_labels=True)
        logger.info("Averaged weights written to %s", path)
    return result


def export_predictions(predictions: np.ndarray, targets: np.ndarray, node_ids: Sequence[str],
                       path: PathLike, node: Union[int, str] = 0,
                       timestamps: Optional[Sequence] = None) -> Path:
    """Write the forecast-vs-observed series of one node as CSV.

    Args:
        predictions: (samples, N) forecasts in mph
        targets: (samples, N) observations in mph
        node_ids: Column labels in graph index order
        path: Destination
        node: Node index or node id
        timestamps: Optional target timestamps (step numbers if None)

    Returns:
        The written path
    """
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if predictions.shape != targets.shape:
        raise ShapeError(f"predictions {predictions.shape} and targets {targets.shape} differ")
    node_ids = list(node_ids)
    index = node_ids.index(node) if isinstance(node, str) else int(node)
    if not 0 <= index < predictions.shape[1]:
        raise ValueError(f"node {node!r} is out of range")

    frame = pd.DataFrame({
        "step": np.arange(predictions.shape[0]) if timestamps is None else [str(t) for t in timestamps],
        "target": targets[:, index],
        "prediction": predictions[:, index],
    })
    if timestamps is not None:
        frame = frame.rename(columns={"step": "timestamp"})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("Forecast series for node %s written to %s", node_ids[index], path)
    return path
