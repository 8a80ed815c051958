"""Shared fixtures for the forecaster tests."""

import numpy as np
import pytest

from trafficgc.data import generate_synthetic, make_windows, normalize
from trafficgc.graph import TrafficGraph, build_graph_matrices
from trafficgc.utils.helpers import make_rng


def path_graph(n: int, length: float = 1.0) -> TrafficGraph:
    return TrafficGraph(n, tuple((i, i + 1, length) for i in range(n - 1)))


def random_graph(n: int, rng: np.random.Generator, p: float = 0.35) -> TrafficGraph:
    """Erdos-Renyi style graph with lengths in [0.5, 3] miles (may be disconnected)."""
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((i, j, float(rng.uniform(0.5, 3.0))))
    return TrafficGraph(n, tuple(edges))


@pytest.fixture
def rng():
    return make_rng(0)


@pytest.fixture
def path4():
    return path_graph(4)


@pytest.fixture
def path4_matrices(path4):
    # 60 mph over 5 minutes reaches 5 miles, so FFR is all ones on a 3-mile path
    return build_graph_matrices(path4, 2)


@pytest.fixture(scope="session")
def ring_dataset():
    graph, dataset = generate_synthetic(6, "ring", 300, seed=3)
    return graph, dataset


@pytest.fixture(scope="session")
def ring_windows(ring_dataset):
    _, dataset = ring_dataset
    scaled, record = normalize(dataset)
    return make_windows(scaled, 5), record
