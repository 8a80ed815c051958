"""Localized spectral graph convolution baseline (polynomial in the Laplacian).

The layer computes sum_{j=0}^{K-1} theta_j L^j x_t with L = D - A, so a
"K-hop" layer uses the powers L^0 .. L^{K-1} and each output node only sees
nodes within K-1 hops.
"""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ShapeError
from ..graph import AdjacencyMatrix, degree_matrix
from ..numeric import Parameter, linear
from ..utils.helpers import as_float_array
from .recurrent import RecurrentForecaster


def laplacian(adjacency: AdjacencyMatrix) -> np.ndarray:
    """Combinatorial graph Laplacian D - A."""
    return degree_matrix(adjacency) - adjacency.values


class LSGCLayer:
    """K scalar coefficients over precomputed Laplacian powers."""

    def __init__(self, lap: np.ndarray, order: int, theta: Optional[np.ndarray] = None):
        """Initialize the layer.

        Args:
            lap: N x N Laplacian
            order: Number of polynomial terms K
            theta: Initial coefficients (defaults to (1, 0, ..., 0), the identity filter)
        """
        if order < 1:
            raise ValueError(f"LSGC order must be at least 1, got {order}")
        lap = as_float_array(lap, "laplacian", ndim=2)
        n = lap.shape[0]
        self.laplacian = lap
        powers = [np.eye(n)]
        for _ in range(1, order):
            powers.append(powers[-1] @ lap)
        self.powers = np.stack(powers)

        if theta is None:
            theta = np.zeros(order)
            theta[0] = 1.0
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (order,):
            raise ShapeError(f"theta must have shape ({order},), got {theta.shape}")
        self.theta = Parameter("theta", theta)

    @property
    def order(self) -> int:
        return self.powers.shape[0]

    @property
    def node_count(self) -> int:
        return self.powers.shape[1]

    def parameters(self) -> List[Parameter]:
        return [self.theta]


def lsgc_forward(layer: LSGCLayer, x_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Apply the spectral polynomial filter.

    Args:
        layer: LSGC layer
        x_t: Speeds, length N or (batch, N)

    Returns:
        Tuple of (filtered signal shaped like x_t, the terms L^j x_t of shape (..., K, N))
    """
    x_t = as_float_array(x_t, "LSGC input")
    if x_t.shape[-1] != layer.node_count:
        raise ShapeError(f"LSGC input has {x_t.shape[-1]} nodes, layer has {layer.node_count}")
    terms = np.stack([linear(x_t, power) for power in layer.powers], axis=-2)
    return np.einsum("...kn,k->...n", terms, layer.theta.value), terms


def lsgc_backward(layer: LSGCLayer, terms: np.ndarray,
                  upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of lsgc_forward.

    Returns:
        Tuple of (dL/dtheta of shape (K,), dL/dx_t)
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    order, n = terms.shape[-2:]
    # Batch dimensions fold into one sample axis before contracting
    grad_theta = np.einsum("bkn,bn->k", terms.reshape(-1, order, n), upstream.reshape(-1, n))
    grad_x = sum(theta_j * (upstream @ power)
                 for theta_j, power in zip(layer.theta.value, layer.powers))
    return grad_theta, grad_x


class LSGCLSTM(RecurrentForecaster):
    """One LSGC layer stacked under a vanilla LSTM."""

    kind = "lsgc-lstm"

    def __init__(self, lap: np.ndarray, order: int, rng: Optional[np.random.Generator] = None):
        self.lsgc = LSGCLayer(lap, order)
        super().__init__(self.lsgc.node_count, self.lsgc.node_count, rng)

    def encoder_parameters(self) -> List[Parameter]:
        return self.lsgc.parameters()

    def _encode(self, x_t: np.ndarray) -> Tuple[np.ndarray, Any]:
        return lsgc_forward(self.lsgc, x_t)

    def _encode_backward(self, x_t: np.ndarray, encoded: Any, d_inp: np.ndarray) -> np.ndarray:
        grad_theta, grad_x = lsgc_backward(self.lsgc, encoded, d_inp)
        self.lsgc.theta.accumulate(grad_theta)
        return grad_x

    def structure(self) -> Dict[str, np.ndarray]:
        return {"laplacian": self.lsgc.laplacian, "order": np.array(self.lsgc.order)}

    @classmethod
    def from_structure(cls, arrays: Dict[str, np.ndarray]) -> "LSGCLSTM":
        return cls(arrays["laplacian"], int(arrays["order"]))


def lsgc_lstm_forward(model: LSGCLSTM, inputs: np.ndarray) -> np.ndarray:
    """Prediction h_T of the LSGC + LSTM stack."""
    return model.predict(inputs)
