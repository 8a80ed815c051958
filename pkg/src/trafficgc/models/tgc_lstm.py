"""Traffic graph convolutional LSTM.

Each step convolves x_t with the K masked graph weights, feeds the
hop-major concatenation GC_t (length K*N) to the LSTM gates, and mixes the
previous cell state through the masked neighborhood gate
C*_{t-1} = (W_N * mask_K) C_{t-1} before the forget gate.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..graph import SupportMask
from ..numeric import Parameter, masked_linear_backward, masked_linear_forward
from .recurrent import LSTMState, RecurrentForecaster, SequenceTape, StepRecord
from .tgc import TGCFeatures, TGCLayer, tgc_backward, tgc_forward

# Same object, named for the cell it belongs to
TGCLSTMState = LSTMState


class TGCLSTMCell(RecurrentForecaster):
    """TGC layer + LSTM gates + masked cell-state gate."""

    kind = "tgc-lstm"

    def __init__(self, masks: Sequence[SupportMask], rng: Optional[np.random.Generator] = None):
        """Initialize the cell.

        Args:
            masks: Support masks for hops 1..K; mask K also constrains W_N
            rng: Generator for weight initialization (zero gate weights if None)
        """
        self.tgc = TGCLayer(masks, rng)
        n = self.tgc.node_count
        super().__init__(n, self.tgc.order * n, rng)

        # W_N starts as all-ones on its support so C_{t-1} flows forward from step one
        gate_mask = self.tgc.masks[-1].values
        self.cell_gate = Parameter("W_N", np.ones((n, n)), mask=gate_mask)

    @property
    def order(self) -> int:
        return self.tgc.order

    @property
    def tgc_layer(self) -> TGCLayer:
        return self.tgc

    def encoder_parameters(self) -> List[Parameter]:
        return self.tgc.parameters()

    def carry_parameters(self) -> List[Parameter]:
        return [self.cell_gate]

    def _encode(self, x_t: np.ndarray) -> Tuple[np.ndarray, Any]:
        features = tgc_forward(self.tgc, x_t)
        return features.flattened, features

    def _encode_backward(self, x_t: np.ndarray, encoded: Any, d_inp: np.ndarray) -> np.ndarray:
        weight_grads, grad_x = tgc_backward(self.tgc, x_t, d_inp)
        for weight, grad in zip(self.tgc.weights, weight_grads):
            weight.accumulate(grad)
        return grad_x

    def _carry(self, c_prev: np.ndarray) -> np.ndarray:
        return masked_linear_forward(self.cell_gate, c_prev)

    def _carry_backward(self, c_prev: np.ndarray, dc_star: np.ndarray) -> np.ndarray:
        grad_w, grad_c = masked_linear_backward(self.cell_gate, c_prev, dc_star)
        self.cell_gate.accumulate(grad_w)
        return grad_c

    def final_features(self, tape: SequenceTape) -> TGCFeatures:
        features = tape.steps[-1].encoded
        if tape.batched:
            return features
        return TGCFeatures(features.hops[0])

    def backward_sequence(self, tape: SequenceTape, d_h: np.ndarray,
                          d_features: Optional[np.ndarray] = None) -> np.ndarray:
        """BPTT with an optional gradient on the final-step features.

        Args:
            tape: Tape from forward_sequence
            d_h: dL/dh_T
            d_features: dL/dGC_T as (..., K, N) hops, e.g. from the feature regularizer

        Returns:
            dL/dX
        """
        d_flat = None
        if d_features is not None:
            d_features = np.asarray(d_features, dtype=np.float64)
            d_flat = TGCFeatures(d_features).flattened
        return super().backward_sequence(tape, d_h, d_flat)

    def structure(self) -> Dict[str, np.ndarray]:
        return {"masks": np.stack([m.values for m in self.tgc.masks])}

    @classmethod
    def from_structure(cls, arrays: Dict[str, np.ndarray]) -> "TGCLSTMCell":
        masks = [SupportMask(k, values) for k, values in enumerate(arrays["masks"], start=1)]
        return cls(masks)


def cell_step(cell: TGCLSTMCell, x_t: np.ndarray, prev: TGCLSTMState) -> Tuple[TGCLSTMState, StepRecord]:
    """One TGC-LSTM step for a single sample or a batch.

    Args:
        cell: The cell
        x_t: Speeds, length N or (batch, N)
        prev: State after step t-1 (same batching as x_t)

    Returns:
        Tuple of (new state, retained step record)
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim == 1:
        state, record = cell.step(x_t[None], LSTMState(np.atleast_2d(prev.h), np.atleast_2d(prev.c)))
        return LSTMState(state.h[0], state.c[0]), record
    return cell.step(x_t, prev)
