"""LSTM gate core and the shared sequence forward / backpropagation through time.

Every forecaster here is one recurrent layer whose hidden size equals the node
count. Models differ only in how x_t is encoded before the gates (traffic
graph convolution, spectral polynomial, or nothing) and in how the previous
cell state is carried into the next step (masked neighborhood gate or
identity). Subclasses provide those two hooks; the time loop lives here.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import NonFiniteError, ShapeError, TapeConsumedError
from ..numeric import Parameter, hadamard, init_uniform, linear, sigmoid, sigmoid_grad, tanh, tanh_grad
from ..utils.helpers import as_float_array

logger = logging.getLogger(__name__)

GATES = ("f", "i", "o", "c")


@dataclass
class LSTMState:
    """Hidden vector h and cell vector C, each (batch, N)."""

    h: np.ndarray
    c: np.ndarray


@dataclass
class GateCache:
    """Everything one step needs for its backward pass."""

    inp: np.ndarray
    h_prev: np.ndarray
    c_star: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    c_tilde: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    pre: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def h(self) -> np.ndarray:
        return hadamard(self.o, self.tanh_c)


class LSTMCore:
    """Gate weights W_*, U_*, b_* for the forget, input, output and candidate gates."""

    def __init__(self, node_count: int, input_dim: int, rng: Optional[np.random.Generator] = None):
        """Initialize the gate parameters.

        Args:
            node_count: Hidden size N
            input_dim: Width of the encoded input (N, or K*N after TGC)
            rng: Generator for uniform initialization (zeros if None)
        """
        self.node_count = node_count
        self.input_dim = input_dim
        self.W: Dict[str, Parameter] = {}
        self.U: Dict[str, Parameter] = {}
        self.b: Dict[str, Parameter] = {}
        for gate in GATES:
            w = init_uniform((node_count, input_dim), input_dim, rng) if rng is not None \
                else np.zeros((node_count, input_dim))
            u = init_uniform((node_count, node_count), node_count, rng) if rng is not None \
                else np.zeros((node_count, node_count))
            self.W[gate] = Parameter(f"W_{gate}", w)
            self.U[gate] = Parameter(f"U_{gate}", u)
            self.b[gate] = Parameter(f"b_{gate}", np.zeros(node_count))

    def parameters(self) -> List[Parameter]:
        return [self.W[g] for g in GATES] + [self.U[g] for g in GATES] + [self.b[g] for g in GATES]

    def step(self, inp: np.ndarray, h_prev: np.ndarray, c_star: np.ndarray) -> GateCache:
        """Gates, candidate, new cell state and hidden state for one time step."""
        pre = {}
        for gate in GATES:
            z = linear(inp, self.W[gate].value) + linear(h_prev, self.U[gate].value) + self.b[gate].value
            if not np.all(np.isfinite(z)):
                raise NonFiniteError(f"gate {gate}")
            pre[gate] = z

        f = sigmoid(pre["f"])
        i = sigmoid(pre["i"])
        o = sigmoid(pre["o"])
        c_tilde = tanh(pre["c"])
        c = hadamard(f, c_star) + hadamard(i, c_tilde)
        if not np.all(np.isfinite(c)):
            raise NonFiniteError("cell state")
        return GateCache(inp, h_prev, c_star, f, i, o, c_tilde, c, tanh(c), pre)

    def step_backward(self, cache: GateCache, dh: np.ndarray,
                      dc: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Accumulate gate-parameter gradients for one step.

        Args:
            cache: Forward cache of the step
            dh: dL/dh_t from the loss and from step t+1
            dc: dL/dC_t arriving from step t+1

        Returns:
            Tuple of (dL/d encoded input, dL/dh_{t-1}, dL/dC*_{t-1})
        """
        dc_total = dc + hadamard(hadamard(dh, cache.o), tanh_grad(cache.c))
        pre = cache.pre
        dz = {
            "f": hadamard(hadamard(dc_total, cache.c_star), sigmoid_grad(pre["f"])),
            "i": hadamard(hadamard(dc_total, cache.c_tilde), sigmoid_grad(pre["i"])),
            "o": hadamard(hadamard(dh, cache.tanh_c), sigmoid_grad(pre["o"])),
            "c": hadamard(hadamard(dc_total, cache.i), tanh_grad(pre["c"])),
        }
        d_inp = np.zeros_like(cache.inp)
        dh_prev = np.zeros_like(cache.h_prev)
        for gate in GATES:
            g = dz[gate]
            self.W[gate].accumulate(g.T @ cache.inp)
            self.U[gate].accumulate(g.T @ cache.h_prev)
            self.b[gate].accumulate(g.sum(axis=0))
            d_inp += g @ self.W[gate].value
            dh_prev += g @ self.U[gate].value
        return d_inp, dh_prev, hadamard(dc_total, cache.f)


@dataclass
class StepRecord:
    x: np.ndarray
    c_prev: np.ndarray
    encoded: Any
    gates: GateCache


@dataclass
class SequenceTape:
    """Forward intermediates of one (batched) sequence, consumable once."""

    inputs: np.ndarray
    steps: List[StepRecord] = field(default_factory=list)
    batched: bool = True
    consumed: bool = False

    @property
    def final_state(self) -> LSTMState:
        last = self.steps[-1].gates
        return LSTMState(last.h, last.c)


class RecurrentForecaster(ABC):
    """One-step-ahead forecaster: the hidden state after T steps predicts x_{T+1}."""

    kind: str = ""

    def __init__(self, node_count: int, input_dim: int, rng: Optional[np.random.Generator] = None):
        self.node_count = node_count
        self.core = LSTMCore(node_count, input_dim, rng)

    # --- hooks -----------------------------------------------------------

    @abstractmethod
    def _encode(self, x_t: np.ndarray) -> Tuple[np.ndarray, Any]:
        """Map (batch, N) speeds to the gate input and a cache for backward."""

    @abstractmethod
    def _encode_backward(self, x_t: np.ndarray, encoded: Any, d_inp: np.ndarray) -> np.ndarray:
        """Accumulate encoder gradients; return dL/dx_t."""

    def _carry(self, c_prev: np.ndarray) -> np.ndarray:
        return c_prev

    def _carry_backward(self, c_prev: np.ndarray, dc_star: np.ndarray) -> np.ndarray:
        return dc_star

    def encoder_parameters(self) -> List[Parameter]:
        return []

    def carry_parameters(self) -> List[Parameter]:
        return []

    @abstractmethod
    def structure(self) -> Dict[str, np.ndarray]:
        """Graph-derived constants needed to rebuild the model from a checkpoint."""

    # --- parameters ------------------------------------------------------

    def parameters(self) -> List[Parameter]:
        return self.encoder_parameters() + self.core.parameters() + self.carry_parameters()

    def named_parameters(self) -> Dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    @property
    def tgc_layer(self):
        """The traffic graph convolution layer, if the model has one."""
        return None

    def final_features(self, tape: SequenceTape):
        """Convolution features of the last step (None without a TGC layer)."""
        return None

    # --- sequence --------------------------------------------------------

    def initial_state(self, batch: int) -> LSTMState:
        return LSTMState(np.zeros((batch, self.node_count)), np.zeros((batch, self.node_count)))

    def step(self, x_t: np.ndarray, prev: LSTMState) -> Tuple[LSTMState, StepRecord]:
        """Advance one time step.

        Args:
            x_t: Speeds at time t, (batch, N)
            prev: State after step t-1

        Returns:
            Tuple of (new state, record retained for backward)
        """
        inp, encoded = self._encode(x_t)
        c_star = self._carry(prev.c)
        gates = self.core.step(inp, prev.h, c_star)
        return LSTMState(gates.h, gates.c), StepRecord(x_t, prev.c, encoded, gates)

    def _check_sequence(self, inputs: np.ndarray) -> Tuple[np.ndarray, bool]:
        inputs = np.asarray(inputs, dtype=np.float64)
        batched = inputs.ndim == 3
        if not batched:
            if inputs.ndim != 2:
                raise ShapeError(f"sequence must be (T, N) or (batch, T, N), got {inputs.shape}")
            inputs = inputs[None]
        if inputs.shape[1] < 1 or inputs.shape[2] != self.node_count:
            raise ShapeError(f"sequence shape {inputs.shape[1:]} does not fit N={self.node_count}")
        finite = np.isfinite(inputs).all(axis=(0, 2))
        if not finite.all():
            raise NonFiniteError(f"input row {int(np.argmin(finite))}")
        return inputs, batched

    def forward_sequence(self, inputs: np.ndarray) -> Tuple[np.ndarray, SequenceTape]:
        """Run the cell over t = 1..T from zero state.

        Args:
            inputs: Speeds (T, N) or (batch, T, N)

        Returns:
            Tuple of (h_T shaped (N,) or (batch, N), tape for backward_sequence)
        """
        inputs, batched = self._check_sequence(inputs)
        state = self.initial_state(inputs.shape[0])
        tape = SequenceTape(inputs, batched=batched)
        for t in range(inputs.shape[1]):
            state, record = self.step(inputs[:, t, :], state)
            tape.steps.append(record)
        return (state.h if batched else state.h[0]), tape

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        prediction, _ = self.forward_sequence(inputs)
        return prediction

    def backward_sequence(self, tape: SequenceTape, d_h: np.ndarray,
                          d_final_input: Optional[np.ndarray] = None) -> np.ndarray:
        """Backpropagation through time.

        Parameter gradients are added to each Parameter's grad.

        Args:
            tape: Tape from forward_sequence (consumed by this call)
            d_h: dL/dh_T, same shape as the prediction
            d_final_input: Extra gradient on the encoded input of step T

        Returns:
            dL/dX with the shape of the forward inputs
        """
        if tape.consumed:
            raise TapeConsumedError("this tape was already used by backward_sequence")
        tape.consumed = True

        d_h = as_float_array(d_h, "dL/dh_T")
        if not tape.batched:
            d_h = d_h[None]
            if d_final_input is not None:
                d_final_input = np.asarray(d_final_input, dtype=np.float64)[None]

        dh = d_h
        dc = np.zeros_like(d_h)
        d_inputs = np.zeros_like(tape.inputs)
        last = len(tape.steps) - 1
        for t in range(last, -1, -1):
            record = tape.steps[t]
            d_inp, dh, dc_star = self.core.step_backward(record.gates, dh, dc)
            if t == last and d_final_input is not None:
                d_inp = d_inp + d_final_input
            dc = self._carry_backward(record.c_prev, dc_star)
            d_inputs[:, t, :] = self._encode_backward(record.x, record.encoded, d_inp)
        return d_inputs if tape.batched else d_inputs[0]
