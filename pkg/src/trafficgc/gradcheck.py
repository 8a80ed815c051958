"""Finite-difference verification of every analytic gradient in the package.

Each case builds a small random graph, draws random weights and inputs,
accumulates the analytic gradient once and compares it coordinate by
coordinate against central differences of the same scalar objective. Inputs
are wrapped as Parameters so dL/dx is checked alongside the weights.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np

from .graph import GraphMatrices, TrafficGraph, build_graph_matrices
from .models import (
    LSGCLayer, LSGCLSTM, RecurrentForecaster, TGCLSTMCell, TGCLayer, VanillaLSTMCell,
    laplacian, lsgc_backward, lsgc_forward, reg_feature_l2, reg_weight_l1,
    tgc_backward, tgc_forward
)
from .numeric import Parameter, fd_gradient_errors
from .training import total_loss
from .utils.constants import GRADCHECK_TOLERANCE
from .utils.helpers import make_rng

logger = logging.getLogger(__name__)

# Short time quantum so the FFR of a 5-node graph is only partly filled
GRADCHECK_DELTA_T_MIN = 1.0
BATCH = 2


def random_graph(n: int, rng: np.random.Generator) -> TrafficGraph:
    """Connected graph: a random spanning path plus a few chords, lengths in [0.5, 2] miles."""
    order = rng.permutation(n)
    edges = {(min(a, b), max(a, b)) for a, b in zip(order[:-1], order[1:])}
    for _ in range(n // 2):
        a, b = rng.choice(n, size=2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    return TrafficGraph(n, tuple((int(a), int(b), float(rng.uniform(0.5, 2.0))) for a, b in sorted(edges)))


def random_matrices(n: int, k: int, rng: np.random.Generator) -> GraphMatrices:
    return build_graph_matrices(random_graph(n, rng), k, k, GRADCHECK_DELTA_T_MIN)


def _randomize(params: Iterable[Parameter], rng: np.random.Generator, scale: float = 0.5) -> None:
    for param in params:
        param.value = rng.uniform(-scale, scale, size=param.shape)
        param.apply_mask()
        param.zero_grad()


def _check_model(model: RecurrentForecaster, inputs: np.ndarray,
                 objective: Callable[[RecurrentForecaster, np.ndarray], Tuple[float, Callable]]) -> Dict[str, float]:
    """Run backward once, then finite-difference every parameter and the inputs."""
    x = Parameter("X", inputs)
    model.zero_grad()
    _, backward = objective(model, x.value)
    x.grad = backward()
    params = model.parameters() + [x]
    return fd_gradient_errors(lambda: objective(model, x.value)[0], params)


def _sequence_objective(weights: np.ndarray):
    def objective(model, inputs):
        prediction, tape = model.forward_sequence(inputs)
        return float(np.sum(weights * prediction)), lambda: model.backward_sequence(tape, weights)
    return objective


def case_tgc(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    layer = TGCLayer(random_matrices(n, k, rng).masks, rng)
    x = Parameter("x_t", rng.uniform(0.0, 1.0, size=(BATCH, n)))
    upstream = rng.normal(size=(BATCH, k, n))

    def f():
        return float(np.sum(upstream * tgc_forward(layer, x.value).hops))

    weight_grads, x.grad = tgc_backward(layer, x.value, upstream)
    for weight, grad in zip(layer.weights, weight_grads):
        weight.accumulate(grad)
    return fd_gradient_errors(f, layer.parameters() + [x])


def case_reg_weight_l1(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    layer = TGCLayer(random_matrices(n, k, rng).masks, rng)
    _, grads = reg_weight_l1(layer)
    for weight, grad in zip(layer.weights, grads):
        weight.accumulate(grad)
    return fd_gradient_errors(lambda: reg_weight_l1(layer)[0], layer.parameters())


def case_reg_feature_l2(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    layer = TGCLayer(random_matrices(n, k, rng).masks, rng)
    x = Parameter("x_t", rng.uniform(0.0, 1.0, size=(BATCH, n)))

    def f():
        return float(np.sum(reg_feature_l2(tgc_forward(layer, x.value))[0]))

    _, grad = reg_feature_l2(tgc_forward(layer, x.value))
    weight_grads, x.grad = tgc_backward(layer, x.value, grad)
    for weight, g in zip(layer.weights, weight_grads):
        weight.accumulate(g)
    return fd_gradient_errors(f, layer.parameters() + [x])


def case_lsgc(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    matrices = random_matrices(n, k, rng)
    layer = LSGCLayer(laplacian(matrices.adjacency), k, rng.normal(scale=0.3, size=k))
    x = Parameter("x_t", rng.uniform(0.0, 1.0, size=(BATCH, n)))
    upstream = rng.normal(size=(BATCH, n))

    def f():
        return float(np.sum(upstream * lsgc_forward(layer, x.value)[0]))

    _, terms = lsgc_forward(layer, x.value)
    grad_theta, x.grad = lsgc_backward(layer, terms, upstream)
    layer.theta.accumulate(grad_theta)
    return fd_gradient_errors(f, layer.parameters() + [x])


def case_tgc_lstm(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    model = TGCLSTMCell(random_matrices(n, k, rng).masks, rng)
    _randomize(model.core.b.values(), rng)
    # Move W_N off its all-ones start so the cell-state gate is exercised generically
    model.cell_gate.value = rng.uniform(0.5, 1.5, size=model.cell_gate.shape)
    model.cell_gate.apply_mask()
    inputs = rng.uniform(0.0, 1.0, size=(BATCH, t, n))
    return _check_model(model, inputs, _sequence_objective(rng.normal(size=(BATCH, n))))


def case_lstm(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    model = VanillaLSTMCell(n, rng)
    _randomize(model.core.b.values(), rng)
    inputs = rng.uniform(0.0, 1.0, size=(BATCH, t, n))
    return _check_model(model, inputs, _sequence_objective(rng.normal(size=(BATCH, n))))


def case_lsgc_lstm(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    model = LSGCLSTM(laplacian(random_matrices(n, k, rng).adjacency), k, rng)
    model.lsgc.theta.value = rng.normal(scale=0.3, size=k)
    inputs = rng.uniform(0.0, 1.0, size=(BATCH, t, n))
    return _check_model(model, inputs, _sequence_objective(rng.normal(size=(BATCH, n))))


def case_total_loss(n: int, k: int, t: int, rng: np.random.Generator) -> Dict[str, float]:
    model = TGCLSTMCell(random_matrices(n, k, rng).masks, rng)
    model.cell_gate.value = rng.uniform(0.5, 1.5, size=model.cell_gate.shape)
    model.cell_gate.apply_mask()
    inputs = rng.uniform(0.0, 1.0, size=(BATCH, t, n))
    target = rng.uniform(0.0, 1.0, size=(BATCH, n))
    lambda1, lambda2 = 0.01, 0.01

    def objective(m, x):
        prediction, tape = m.forward_sequence(x)
        loss = total_loss(prediction, target, m.tgc_layer, m.final_features(tape), lambda1, lambda2)

        def backward():
            grad_x = m.backward_sequence(tape, loss.grad_prediction, loss.grad_features)
            for weight, grad in zip(m.tgc_layer.weights, loss.weight_grads):
                weight.accumulate(grad)
            return grad_x

        return loss.value, backward

    return _check_model(model, inputs, objective)


CASES: Dict[str, Callable[[int, int, int, np.random.Generator], Dict[str, float]]] = {
    "tgc": case_tgc,
    "reg-weight-l1": case_reg_weight_l1,
    "reg-feature-l2": case_reg_feature_l2,
    "lsgc": case_lsgc,
    "tgc-lstm": case_tgc_lstm,
    "lstm": case_lstm,
    "lsgc-lstm": case_lsgc_lstm,
    "total-loss": case_total_loss,
}


@dataclass
class GradcheckReport:
    """Worst relative error per (case, seed)."""

    tolerance: float = GRADCHECK_TOLERANCE
    errors: Dict[Tuple[str, int], float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def failures(self) -> List[Tuple[str, int, float]]:
        return [(case, seed, err) for (case, seed), err in sorted(self.errors.items())
                if not err < self.tolerance]

    def per_case(self) -> Dict[str, float]:
        worst: Dict[str, float] = {}
        for (case, _), err in self.errors.items():
            worst[case] = max(worst.get(case, 0.0), err)
        return worst


def run_gradcheck(n: int = 5, k: int = 2, t: int = 3, seeds: Iterable[int] = range(10),
                  cases: Iterable[str] = tuple(CASES),
                  tolerance: float = GRADCHECK_TOLERANCE) -> GradcheckReport:
    """Run the selected cases for every seed.

    Args:
        n: Node count
        k: Hop order
        t: Sequence length
        seeds: Seeds; each seed draws a fresh graph, weights and inputs
        cases: Names from CASES
        tolerance: Pass threshold on the maximum relative error

    Returns:
        GradcheckReport
    """
    cases = tuple(cases)
    unknown = [c for c in cases if c not in CASES]
    if unknown:
        raise ValueError(f"unknown gradcheck cases {unknown}; choose from {tuple(CASES)}")

    report = GradcheckReport(tolerance)
    for seed in seeds:
        for name in cases:
            errors = CASES[name](n, k, t, make_rng(seed))
            worst = max(errors.values(), default=0.0)
            report.errors[(name, seed)] = worst
            logger.debug("gradcheck %s seed %d: %.3e (%s)", name, seed, worst,
                         max(errors, key=errors.get) if errors else "-")
    logger.info("Gradient check: %d runs, max relative error %.3e", len(report.errors), report.max_error)
    return report
