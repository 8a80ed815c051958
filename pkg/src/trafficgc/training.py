"""Regularized loss, the mini-batch training loop and early stopping."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .checkpoint import Checkpoint
from .config import TrainConfig
from .data import WindowSplit
from .errors import DatasetError, ShapeError, TrainingDivergedError
from .models import RecurrentForecaster, TGCFeatures, TGCLayer, reg_feature_l2, reg_weight_l1
from .numeric import clip_grad_norm, rmsprop_step
from .utils.constants import SPARSITY_THRESHOLD
from .utils.helpers import PathLike, make_rng

logger = logging.getLogger(__name__)

# Windows per forward pass when only predictions are needed
PREDICT_CHUNK = 256


@dataclass
class LossResult:
    """Loss value, its parts, and the gradients the backward pass needs.

    Attributes:
        value: MSE + lambda1 * R1 + lambda2 * mean R2
        mse: Mean squared error over every (sample, node) cell
        r1: L1 norm of the masked TGC weights (0 without a TGC layer)
        r2: Mean over samples of the final-step feature difference norm
        grad_prediction: dL/dh_T
        grad_features: dL/dGC_T as (..., K, N) hops, or None
        weight_grads: lambda1 * dR1/dW_gc per hop (empty without a TGC layer)
    """

    value: float
    mse: float
    r1: float
    r2: float
    grad_prediction: np.ndarray
    grad_features: Optional[np.ndarray]
    weight_grads: List[np.ndarray] = field(default_factory=list)


def total_loss(prediction: np.ndarray, target: np.ndarray,
               layer: Optional[TGCLayer] = None, features: Optional[TGCFeatures] = None,
               lambda1: float = 0.0, lambda2: float = 0.0) -> LossResult:
    """MSE(h_T, x_{T+1}) + lambda1 * R1 + lambda2 * R2.

    Args:
        prediction: h_T, length N or (batch, N)
        target: x_{T+1}, same shape
        layer: TGC layer whose weights R1 penalizes
        features: Final-step TGC features R2 penalizes
        lambda1: Weight of the L1 penalty
        lambda2: Weight of the feature-consistency penalty

    Returns:
        LossResult
    """
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ShapeError(f"prediction {prediction.shape} and target {target.shape} differ")

    residual = prediction - target
    mse = float(np.mean(residual * residual))
    grad_prediction = 2.0 * residual / residual.size

    r1, weight_grads = 0.0, []
    if layer is not None:
        r1, subgrads = reg_weight_l1(layer)
        weight_grads = [lambda1 * g for g in subgrads]

    r2, grad_features = 0.0, None
    if features is not None:
        per_sample, grad = reg_feature_l2(features)
        samples = max(per_sample.size, 1)
        r2 = float(np.mean(per_sample))
        grad_features = lambda2 * grad / samples

    value = mse + lambda1 * r1 + lambda2 * r2
    return LossResult(value, mse, r1, r2, grad_prediction, grad_features, weight_grads)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float
    r1: float
    val_r2: float


@dataclass
class TrainReport:
    """Per-epoch history plus the early-stopping outcome."""

    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False
    final_metrics: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        columns = ["epoch", "train_loss", "val_loss", "seconds", "r1", "val_r2"]
        return pd.DataFrame([vars(e) for e in self.epochs], columns=columns)

    def write_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def predict(model: RecurrentForecaster, windows: WindowSplit) -> np.ndarray:
    """Normalized one-step predictions for every window of a split, (windows, N)."""
    if len(windows) == 0:
        return np.zeros((0, model.node_count))
    chunks = [model.predict(windows.inputs[start:start + PREDICT_CHUNK])
              for start in range(0, len(windows), PREDICT_CHUNK)]
    return np.concatenate(chunks)


def weight_sparsity(model: RecurrentForecaster, threshold: float = SPARSITY_THRESHOLD) -> float:
    """Fraction of on-support TGC weights with |w| < threshold."""
    layer = model.tgc_layer
    if layer is None:
        raise ValueError(f"{model.kind} model has no TGC layer")
    small = total = 0
    for weight in layer.weights:
        support = weight.mask > 0
        total += int(support.sum())
        small += int(np.sum(np.abs(weight.value[support]) < threshold))
    return small / total if total else 0.0


class Trainer:
    """Runs RMSProp over shuffled mini-batches with validation-based early stopping."""

    def __init__(self, model: RecurrentForecaster, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.rng = make_rng(cfg.seed)
        self.report = TrainReport()

    def train_batch(self, inputs: np.ndarray, targets: np.ndarray,
                    epoch: int, batch_index: int) -> LossResult:
        """Forward, backward and one optimizer step on a batch of windows."""
        model, cfg = self.model, self.cfg
        model.zero_grad()
        prediction, tape = model.forward_sequence(inputs)
        features = model.final_features(tape)
        loss = total_loss(prediction, targets, model.tgc_layer, features, cfg.lambda1, cfg.lambda2)
        if not np.isfinite(loss.value):
            raise TrainingDivergedError(batch_index, epoch, loss.value)

        if loss.grad_features is not None:
            model.backward_sequence(tape, loss.grad_prediction, loss.grad_features)
        else:
            model.backward_sequence(tape, loss.grad_prediction)
        if model.tgc_layer is not None:
            for weight, grad in zip(model.tgc_layer.weights, loss.weight_grads):
                weight.accumulate(grad)

        params = model.parameters()
        norm = clip_grad_norm(params, cfg.grad_clip)
        for param in params:
            rmsprop_step(param, cfg.optimizer)
        logger.debug("epoch %d batch %d: loss %.6g (grad norm %.3g)", epoch, batch_index, loss.value, norm)
        return loss

    def validate(self, windows: WindowSplit) -> Tuple[float, float]:
        """Validation MSE and mean final-step R2 over a split."""
        squared, r2_total = 0.0, 0.0
        for start in range(0, len(windows), PREDICT_CHUNK):
            inputs = windows.inputs[start:start + PREDICT_CHUNK]
            prediction, tape = self.model.forward_sequence(inputs)
            residual = prediction - windows.targets[start:start + PREDICT_CHUNK]
            squared += float(np.sum(residual * residual))
            features = self.model.final_features(tape)
            if features is not None:
                r2_total += float(np.sum(reg_feature_l2(features)[0]))
        return squared / windows.targets.size, r2_total / len(windows)

    def fit(self, train_windows: WindowSplit,
            val_windows: WindowSplit) -> Tuple[Checkpoint, TrainReport]:
        """Train until max_epochs or until patience epochs pass without improvement.

        Returns:
            Tuple of (best-validation checkpoint, report); the model is left
            holding the best-validation weights
        """
        if len(train_windows) == 0:
            raise DatasetError("training split has no windows")
        if len(val_windows) == 0:
            raise DatasetError("validation split has no windows")

        cfg, report = self.cfg, self.report
        best = Checkpoint.capture(self.model)
        stale = 0
        for epoch in range(1, cfg.max_epochs + 1):
            started = time.perf_counter()
            total, count = 0.0, 0
            order_rng = self.rng if cfg.shuffle else None
            for batch_index, idx in enumerate(train_windows.batches(cfg.batch_size, order_rng)):
                loss = self.train_batch(train_windows.inputs[idx], train_windows.targets[idx],
                                        epoch, batch_index)
                total += loss.value * len(idx)
                count += len(idx)

            val_loss, val_r2 = self.validate(val_windows)
            r1 = reg_weight_l1(self.model.tgc_layer)[0] if self.model.tgc_layer is not None else 0.0
            record = EpochRecord(epoch, total / count, val_loss, time.perf_counter() - started, r1, val_r2)
            report.epochs.append(record)
            logger.info("epoch %d: train %.6g, validation %.6g (%.2fs)",
                        epoch, record.train_loss, val_loss, record.seconds)

            if val_loss < report.best_val_loss:
                report.best_val_loss = val_loss
                report.best_epoch = epoch
                best = Checkpoint.capture(self.model, {"epoch": epoch})
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    report.stopped_early = True
                    logger.info("Early stop after epoch %d; best epoch %d (validation %.6g)",
                                epoch, report.best_epoch, report.best_val_loss)
                    break

        best.restore(self.model)
        return best, report


def train(model: RecurrentForecaster, train_windows: WindowSplit, val_windows: WindowSplit,
          cfg: Optional[TrainConfig] = None) -> Tuple[Checkpoint, TrainReport]:
    """Train model in place; see Trainer.fit."""
    return Trainer(model, cfg or TrainConfig()).fit(train_windows, val_windows)
