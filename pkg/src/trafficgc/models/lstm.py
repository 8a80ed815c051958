"""Vanilla LSTM baseline: raw speeds into the gates, cell state carried unchanged."""

from typing import Any, Dict, Optional, Tuple

import numpy as np

from .recurrent import LSTMState, RecurrentForecaster, StepRecord


class VanillaLSTMCell(RecurrentForecaster):
    """LSTM with N inputs and N hidden units."""

    kind = "lstm"

    def __init__(self, node_count: int, rng: Optional[np.random.Generator] = None):
        super().__init__(node_count, node_count, rng)

    def _encode(self, x_t: np.ndarray) -> Tuple[np.ndarray, Any]:
        return x_t, None

    def _encode_backward(self, x_t: np.ndarray, encoded: Any, d_inp: np.ndarray) -> np.ndarray:
        return d_inp

    def structure(self) -> Dict[str, np.ndarray]:
        return {"node_count": np.array(self.node_count)}

    @classmethod
    def from_structure(cls, arrays: Dict[str, np.ndarray]) -> "VanillaLSTMCell":
        return cls(int(arrays["node_count"]))


def vanilla_lstm_step(cell: VanillaLSTMCell, x_t: np.ndarray,
                      prev: LSTMState) -> Tuple[LSTMState, StepRecord]:
    """One vanilla LSTM step on a (batch, N) input."""
    return cell.step(np.atleast_2d(np.asarray(x_t, dtype=np.float64)),
                     LSTMState(np.atleast_2d(prev.h), np.atleast_2d(prev.c)))
