"""Traffic graph convolution layer and its regularizers."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from ..graph import SupportMask
from ..numeric import Parameter, init_uniform, masked_linear_backward, masked_linear_forward
from ..utils.helpers import as_float_array


@dataclass
class TGCFeatures:
    """Per-hop convolution features.

    Attributes:
        hops: Array of shape (..., K, N); hops[..., k-1, :] is GC^k
    """

    hops: np.ndarray

    @property
    def order(self) -> int:
        return self.hops.shape[-2]

    @property
    def node_count(self) -> int:
        return self.hops.shape[-1]

    def hop(self, k: int) -> np.ndarray:
        """GC^k for a 1-based hop order."""
        return self.hops[..., k - 1, :]

    @property
    def flattened(self) -> np.ndarray:
        """Hop-major concatenation: flattened[(k-1)*N + i] = GC^k_i."""
        return self.hops.reshape(self.hops.shape[:-2] + (self.order * self.node_count,))

    @classmethod
    def from_flat(cls, flat: np.ndarray, order: int) -> "TGCFeatures":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape[-1] % order:
            raise ShapeError(f"flattened width {flat.shape[-1]} is not a multiple of K={order}")
        return cls(flat.reshape(flat.shape[:-1] + (order, flat.shape[-1] // order)))


class TGCLayer:
    """K masked N x N convolution weights, one per hop order."""

    def __init__(self, masks: Sequence[SupportMask], rng: Optional[np.random.Generator] = None):
        """Initialize the layer.

        Args:
            masks: Support masks for hops 1..K
            rng: Generator for the uniform weight draw (zeros if None)
        """
        if not masks:
            raise ValueError("a TGC layer needs at least one hop order")
        self.masks = tuple(masks)
        n = self.masks[0].values.shape[0]
        self.weights: List[Parameter] = []
        for k, mask in enumerate(self.masks, start=1):
            if mask.values.shape != (n, n):
                raise ShapeError(f"mask {k} has shape {mask.values.shape}, expected {(n, n)}")
            value = init_uniform((n, n), n, rng) if rng is not None else np.zeros((n, n))
            self.weights.append(Parameter(f"W_gc_{k}", value, mask=mask.values))

    @property
    def order(self) -> int:
        return len(self.weights)

    @property
    def node_count(self) -> int:
        return self.weights[0].shape[0]

    def parameters(self) -> List[Parameter]:
        return list(self.weights)


def tgc_forward(layer: TGCLayer, x_t: np.ndarray) -> TGCFeatures:
    """GC^k = (W_gc,k * mask_k) x_t for every hop k.

    Args:
        layer: Convolution layer
        x_t: Speeds, length N or (batch, N)

    Returns:
        TGCFeatures with hops of shape (..., K, N)
    """
    x_t = as_float_array(x_t, "TGC input")
    if x_t.shape[-1] != layer.node_count:
        raise ShapeError(f"TGC input has {x_t.shape[-1]} nodes, layer has {layer.node_count}")
    hops = [masked_linear_forward(w, x_t) for w in layer.weights]
    return TGCFeatures(np.stack(hops, axis=-2))


def tgc_backward(layer: TGCLayer, x_t: np.ndarray,
                 upstream: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Gradients of tgc_forward.

    Args:
        layer: Layer used in the forward pass
        x_t: Forward input, length N or (batch, N)
        upstream: dL/dGC as (..., K, N) hops or (..., K*N) flattened

    Returns:
        Tuple of (per-hop weight gradients masked to their support, dL/dx_t)
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if upstream.ndim == x_t.ndim:
        upstream = TGCFeatures.from_flat(upstream, layer.order).hops
    if upstream.shape[-2] != layer.order:
        raise ShapeError(f"upstream has {upstream.shape[-2]} hops, layer has {layer.order}")

    weight_grads = []
    grad_x = np.zeros_like(x_t)
    for k, weight in enumerate(layer.weights):
        grad_w, grad_in = masked_linear_backward(weight, x_t, upstream[..., k, :])
        weight_grads.append(grad_w)
        grad_x = grad_x + grad_in
    return weight_grads, grad_x


def reg_weight_l1(layer: TGCLayer) -> Tuple[float, List[np.ndarray]]:
    """Entrywise L1 norm of the masked convolution weights.

    Returns:
        Tuple of (R1, per-hop subgradients sign(W) * mask, 0 at 0)
    """
    value = 0.0
    grads = []
    for weight in layer.weights:
        effective = weight.effective()
        value += float(np.sum(np.abs(effective)))
        grads.append(weight.mask_gradient(np.sign(effective)))
    return value, grads


def reg_feature_l2(features: TGCFeatures) -> Tuple[np.ndarray, np.ndarray]:
    """L2 norm of the differences between adjacent hop features.

    R2 = sqrt(sum_i sum_nodes (GC^i - GC^{i+1})^2), computed per sample over
    any leading batch dimensions. The gradient is defined as 0 where R2 = 0.

    Returns:
        Tuple of (R2 per sample, dR2/dGC with the shape of features.hops)
    """
    hops = features.hops
    grad = np.zeros_like(hops)
    if features.order < 2:
        return np.zeros(hops.shape[:-2]), grad

    diffs = hops[..., :-1, :] - hops[..., 1:, :]
    value = np.sqrt(np.sum(diffs * diffs, axis=(-2, -1)))
    safe = np.where(value > 0, value, 1.0)[..., None, None]
    scaled = np.where(value[..., None, None] > 0, diffs / safe, 0.0)
    # d_i appears with + sign for GC^i and - sign for GC^{i+1}
    grad[..., :-1, :] += scaled
    grad[..., 1:, :] -= scaled
    return value, grad
