"""Dense kernels, trainable parameters, gradient checking and RMSProp.

Everything runs in float64. Parameters that carry a support mask keep their
off-support entries at exactly zero: forward passes use the masked value,
gradients are masked, and the optimizer re-applies the mask after each step.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .config import OptimizerConfig
from .errors import NonFiniteError, ShapeError
from .utils.constants import GRADCHECK_FLOOR, GRADCHECK_STEP
from .utils.helpers import as_float_array

logger = logging.getLogger(__name__)

DenseMatrix = np.ndarray


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Matrix product with a fixed left-to-right summation order.

    Each output entry is accumulated as ((a[i,0]*b[0,j]) + a[i,1]*b[1,j]) + ...,
    the same order as a naive triple loop, so results are reproducible to the
    last bit regardless of the BLAS in use.

    Args:
        a: Left operand, shape (r, n)
        b: Right operand, shape (n, c) or a length-n vector

    Returns:
        Product of shape (r, c), or length r for a vector operand
    """
    a = as_float_array(a, "matmul lhs")
    b = as_float_array(b, "matmul rhs")
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k:k + 1] * b[k:k + 1, :]
    return out[:, 0] if vector else out


def linear(x: DenseMatrix, weight: DenseMatrix) -> DenseMatrix:
    """x W^T for a length-n vector or row-wise for a (batch, n) matrix, through matmul."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return matmul(weight, x)
    return matmul(x, np.asarray(weight).T)


def hadamard(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Element-wise product of two equally shaped matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return a * b


def sigmoid(x: DenseMatrix) -> DenseMatrix:
    """Logistic function, stable for large |x|."""
    return expit(x)


def sigmoid_grad(x: DenseMatrix) -> DenseMatrix:
    """Derivative of the logistic function at x."""
    s = expit(x)
    return s * (1.0 - s)


def tanh(x: DenseMatrix) -> DenseMatrix:
    return np.tanh(x)


def tanh_grad(x: DenseMatrix) -> DenseMatrix:
    """Derivative of tanh at x."""
    t = np.tanh(x)
    return 1.0 - t * t


def init_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator) -> DenseMatrix:
    """Uniform draw in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(eq=False)
class Parameter:
    """Trainable matrix bundled with its gradient and RMSProp state.

    Attributes:
        name: Stable identifier used by checkpoints and reports
        value: Current weights
        mask: Optional {0,1} support; off-support weights stay exactly zero
        grad: Gradient accumulator (same shape as value)
        rms_state: Running mean of squared gradients (same shape as value)
    """

    name: str
    value: DenseMatrix
    mask: Optional[DenseMatrix] = None
    grad: DenseMatrix = field(default=None, repr=False)
    rms_state: DenseMatrix = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        if self.mask is not None:
            mask = np.array(self.mask, dtype=np.float64)
            if mask.shape != self.value.shape:
                raise ShapeError(f"{self.name}: mask {mask.shape} does not match value {self.value.shape}")
            mask.flags.writeable = False
            self.mask = mask
            self.apply_mask()
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.rms_state is None:
            self.rms_state = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape or self.rms_state.shape != self.value.shape:
            raise ShapeError(f"{self.name}: grad/rms_state shapes must equal value shape")

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def effective(self) -> DenseMatrix:
        """Value as seen by the forward pass (masked when a mask is set)."""
        if self.mask is None:
            return self.value
        return self.value * self.mask

    def apply_mask(self) -> None:
        if self.mask is not None:
            self.value = np.where(self.mask > 0, self.value, 0.0)

    def mask_gradient(self, grad: DenseMatrix) -> DenseMatrix:
        """Zero (exactly, +0.0) every gradient entry outside the support."""
        if self.mask is None:
            return grad
        return np.where(self.mask > 0, grad, 0.0)

    def accumulate(self, grad: DenseMatrix) -> None:
        if grad.shape != self.value.shape:
            raise ShapeError(f"{self.name}: gradient {grad.shape} does not match {self.value.shape}")
        self.grad += self.mask_gradient(grad)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


def masked_linear_forward(param: Parameter, x: DenseMatrix) -> DenseMatrix:
    """y = (W * M) x for a vector, or row-wise for a (batch, n) matrix.

    Args:
        param: Weight W (N_out x N_in) with optional mask M
        x: Input of length N_in, or shape (batch, N_in)

    Returns:
        Output of length N_out, or shape (batch, N_out)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != param.shape[1]:
        raise ShapeError(f"{param.name}: input width {x.shape[-1]} does not match {param.shape}")
    return linear(x, param.effective())


def masked_linear_backward(param: Parameter, x: DenseMatrix,
                           upstream: DenseMatrix) -> Tuple[DenseMatrix, DenseMatrix]:
    """Gradients of y = (W * M) x.

    Args:
        param: Weight used in the forward pass
        x: Forward input, length N_in or (batch, N_in)
        upstream: dL/dy, length N_out or (batch, N_out)

    Returns:
        Tuple of (dL/dW masked to the support, dL/dx)
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape[-1] != param.shape[0]:
        raise ShapeError(f"{param.name}: upstream width {upstream.shape[-1]} does not match {param.shape}")
    x2 = np.atleast_2d(x)
    g2 = np.atleast_2d(upstream)
    grad_w = param.mask_gradient(g2.T @ x2)
    grad_x = upstream @ param.effective()
    return grad_w, grad_x


def clip_grad_norm(params: Iterable[Parameter], max_norm: Optional[float]) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns:
        The global norm before clipping
    """
    params = list(params)
    norm = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


def rmsprop_step(param: Parameter, cfg: OptimizerConfig) -> None:
    """One uncentered RMSProp update, then mask re-application and grad reset.

    s <- alpha * s + (1 - alpha) * g^2
    w <- w - lr * g / (sqrt(s) + eps)
    """
    g = param.grad
    param.rms_state = cfg.alpha * param.rms_state + (1.0 - cfg.alpha) * g * g
    param.value = param.value - cfg.learning_rate * g / (np.sqrt(param.rms_state) + cfg.epsilon)
    param.apply_mask()
    param.zero_grad()


def fd_gradient_errors(f: Callable[[], float], params: Sequence[Parameter],
                       h: float = GRADCHECK_STEP,
                       floor: float = GRADCHECK_FLOOR) -> Dict[str, float]:
    """Central-difference check of every coordinate of every parameter.

    The analytic gradient must already sit in each parameter's grad. Values
    are perturbed in place and restored exactly.

    Args:
        f: Deterministic scalar function of the current parameter values
        params: Parameters to check
        h: Finite-difference step
        floor: Lower bound of the relative-error denominator

    Returns:
        Maximum relative error per parameter name
    """
    errors = {}
    for param in params:
        worst = 0.0
        flat = param.value.reshape(-1)
        analytic = param.grad.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + h
            f_plus = f()
            flat[idx] = saved - h
            f_minus = f()
            flat[idx] = saved
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(param.name, f"non-finite objective while perturbing {param.name}[{idx}]")
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(analytic[idx]), abs(numeric), floor)
            worst = max(worst, abs(analytic[idx] - numeric) / denom)
        errors[param.name] = worst
        logger.debug("gradcheck %s: max relative error %.3e", param.name, worst)
    return errors


def fd_gradient_check(f: Callable[[], float], params: Sequence[Parameter],
                      h: float = GRADCHECK_STEP, floor: float = GRADCHECK_FLOOR) -> float:
    """Maximum relative error between analytic and central-difference gradients."""
    errors = fd_gradient_errors(f, params, h=h, floor=floor)
    return max(errors.values(), default=0.0)
