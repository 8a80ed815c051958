"""Tests for the graph matrices."""

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from trafficgc.errors import DatasetError, GraphValidationError, ShapeError
from trafficgc.graph import (
    AdjacencyMatrix, DistanceMatrix, FFRMatrix, KHopNeighborhood, TrafficGraph,
    build_adjacency, build_graph_matrices, compute_k_max, connected_subgraph,
    degree_matrix, free_flow_reachable, khop_neighborhood, load_topology,
    pairwise_free_flow, save_topology, shortest_path_distances, support_mask
)
from trafficgc.utils.helpers import make_rng, read_matrix_csv, write_matrix_csv

from conftest import path_graph, random_graph


def hop_distances(graph):
    n = graph.node_count
    a = build_adjacency(graph).values
    return shortest_path(csr_matrix(a), unweighted=True, directed=False) if n else np.zeros((0, 0))


def test_adjacency_path(path4):
    expected = np.zeros((4, 4))
    for i, j in [(0, 1), (1, 2), (2, 3)]:
        expected[i, j] = expected[j, i] = 1
    assert_array_equal(build_adjacency(path4).values, expected)


def test_adjacency_empty_and_triangle():
    assert_array_equal(build_adjacency(TrafficGraph(3, ())).values, np.zeros((3, 3)))
    triangle = TrafficGraph(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)))
    assert_array_equal(build_adjacency(triangle).values, np.ones((3, 3)) - np.eye(3))


@pytest.mark.parametrize("edges", [
    ((0, 0, 1.0),),
    ((0, 1, 1.0), (1, 0, 2.0)),
    ((0, 1, 0.0),),
    ((0, 5, 1.0),),
])
def test_invalid_graphs_rejected(edges):
    with pytest.raises(GraphValidationError):
        TrafficGraph(3, edges)


def test_nonpositive_node_speed_rejected():
    with pytest.raises(GraphValidationError):
        TrafficGraph(2, ((0, 1, 1.0),), node_free_flow=np.array([60.0, 0.0]))


def test_degree_matrix(path4):
    assert_array_equal(np.diag(degree_matrix(build_adjacency(path4))), [1, 2, 2, 1])


def test_khop_path_examples(path4):
    adj = build_adjacency(path4)
    expected = np.array([[1, 1, 1, 0], [1, 1, 1, 1], [1, 1, 1, 1], [0, 1, 1, 1]])
    assert_array_equal(khop_neighborhood(adj, 2).values, expected)
    assert_array_equal(khop_neighborhood(adj, 3).values, np.ones((4, 4)))
    # First order keeps the self-loops
    assert_array_equal(khop_neighborhood(adj, 1).values, adj.values + np.eye(4))


def test_khop_isolated_nodes_is_identity():
    adj = AdjacencyMatrix(np.zeros((3, 3)))
    assert_array_equal(khop_neighborhood(adj, 4).values, np.eye(3))


@pytest.mark.parametrize("k", [0, -1, 1.5])
def test_khop_bad_order(path4, k):
    with pytest.raises(ValueError):
        khop_neighborhood(build_adjacency(path4), k)


def test_khop_matches_bfs_on_random_graphs():
    rng = make_rng(11)
    for _ in range(30):
        graph = random_graph(int(rng.integers(2, 13)), rng)
        hops = hop_distances(graph)
        adj = build_adjacency(graph)
        for k in range(1, 5):
            assert_array_equal(khop_neighborhood(adj, k).values, (hops <= k).astype(float))


def test_shortest_path_examples():
    graph = TrafficGraph(3, ((0, 1, 2.0), (1, 2, 3.0)))
    dist = shortest_path_distances(graph).values
    assert dist[0, 2] == 5.0
    assert_array_equal(np.diag(dist), 0.0)

    split = TrafficGraph(4, ((0, 1, 1.0), (2, 3, 1.0)))
    dist = shortest_path_distances(split).values
    assert math.isinf(dist[0, 2]) and math.isinf(dist[3, 1])


def _brute_force_distance(graph, source, target):
    lengths = graph.edge_lengths()
    best = math.inf

    def walk(node, seen, total):
        nonlocal best
        if node == target:
            best = min(best, total)
            return
        for (a, b), length in lengths.items():
            if a == node and b not in seen:
                walk(b, seen | {b}, total + length)

    walk(source, {source}, 0.0)
    return best


def test_shortest_path_matches_enumeration():
    rng = make_rng(5)
    for _ in range(10):
        graph = random_graph(int(rng.integers(2, 8)), rng, p=0.45)
        dist = shortest_path_distances(graph).values
        for i in range(graph.node_count):
            for j in range(graph.node_count):
                expected = 0.0 if i == j else _brute_force_distance(graph, i, j)
                assert dist[i, j] == pytest.approx(expected, rel=1e-12)


def test_ffr_arithmetic():
    inf = math.inf
    dist = DistanceMatrix(np.array([[0.0, 10.0, 20.0], [10.0, 0.0, inf], [20.0, inf, 0.0]]))
    ffr = free_flow_reachable(dist, 60.0, 3, 5.0).values
    assert ffr[0, 1] == 1 and ffr[0, 2] == 0
    assert ffr[1, 2] == 0
    assert_array_equal(np.diag(ffr), 1.0)


def test_ffr_argument_errors():
    dist = DistanceMatrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        free_flow_reachable(dist, 60.0, 0, 5.0)
    with pytest.raises(ValueError):
        free_flow_reachable(dist, 60.0, 1, 0.0)
    with pytest.raises(GraphValidationError):
        free_flow_reachable(dist, -1.0, 1, 5.0)


def test_pairwise_free_flow():
    graph = TrafficGraph(2, ((0, 1, 1.0),))
    speeds = pairwise_free_flow(graph, shortest_path_distances(graph))
    assert_array_equal(speeds, 60.0)

    graph = TrafficGraph(3, ((0, 1, 1.0), (1, 2, 1.0)), node_free_flow=np.array([60.0, 30.0, 30.0]))
    speeds = pairwise_free_flow(graph, shortest_path_distances(graph))
    # Segment pace is the mean of the endpoint paces: (1/60 + 1/30) / 2 hours per mile
    assert speeds[0, 1] == pytest.approx(40.0)
    assert speeds[1, 2] == pytest.approx(30.0)
    assert speeds[0, 2] == pytest.approx(2.0 / (0.025 + 1.0 / 30.0))
    assert_array_equal(speeds, speeds.T)


def test_pairwise_free_flow_tied_paths_symmetric():
    # Both routes between 0 and 2 are two miles; the one through node 3 is faster
    cycle = TrafficGraph(4, ((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)),
                         node_free_flow=np.array([60.0, 10.0, 60.0, 100.0]))
    dist = shortest_path_distances(cycle)
    speeds = pairwise_free_flow(cycle, dist)
    assert speeds[0, 2] == pytest.approx(2.0 / (1.0 / 60.0 + 1.0 / 100.0))
    assert speeds[0, 2] == pytest.approx(75.0)
    assert_array_equal(speeds, speeds.T)
    ffr = free_flow_reachable(dist, speeds, 1, 2.0).values
    assert ffr[0, 2] == ffr[2, 0] == 1.0
    assert_array_equal(ffr, ffr.T)


def test_pairwise_free_flow_symmetric_with_integer_lengths():
    rng = make_rng(12)
    for _ in range(20):
        n = int(rng.integers(4, 10))
        edges = tuple((i, j, float(rng.integers(1, 3)))
                      for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4)
        graph = TrafficGraph(n, edges, node_free_flow=rng.uniform(10.0, 80.0, size=n))
        dist = shortest_path_distances(graph)
        speeds = pairwise_free_flow(graph, dist)
        assert_array_equal(speeds, speeds.T)
        matrices = build_graph_matrices(graph, 3, delta_t_min=1.0)
        for mask in matrices.masks:
            assert_array_equal(mask.values, mask.values.T)


def test_support_mask_examples(path4):
    adj = build_adjacency(path4)
    ffr_values = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 1]], dtype=float)
    ones = KHopNeighborhood(1, np.ones((3, 3)))
    assert_array_equal(support_mask(ones, FFRMatrix(ffr_values, 1, 5.0)).values, ffr_values)
    assert_array_equal(support_mask(ones, FFRMatrix(np.eye(3), 1, 5.0)).values, np.eye(3))

    first = khop_neighborhood(adj, 1).values
    mask = support_mask(khop_neighborhood(adj, 2), FFRMatrix(first, 1, 5.0))
    assert_array_equal(mask.values, first)

    with pytest.raises(ShapeError):
        support_mask(khop_neighborhood(adj, 2), FFRMatrix(np.eye(3), 1, 5.0))


def test_k_max_examples(path4):
    adj = build_adjacency(path4)
    assert compute_k_max(adj, FFRMatrix(np.ones((4, 4)), 1, 5.0)) == 3
    assert compute_k_max(adj, FFRMatrix(np.eye(4), 1, 5.0)) == 1
    complete = build_adjacency(TrafficGraph(4, tuple((i, j, 1.0) for i in range(4) for j in range(i + 1, 4))))
    assert compute_k_max(complete, FFRMatrix(np.ones((4, 4)), 1, 5.0)) == 1


def test_masks_converge_to_ffr_on_random_graphs():
    rng = make_rng(2024)
    for _ in range(50):
        n = int(rng.integers(2, 13))
        graph = random_graph(n, rng)
        matrices = build_graph_matrices(graph, n, m=int(rng.integers(1, 4)),
                                        delta_t_min=float(rng.uniform(0.5, 4.0)))
        ffr = matrices.ffr.values
        for k in range(1, n):
            lower, upper = matrices.mask(k).values, matrices.mask(k + 1).values
            assert np.all(lower <= upper)
            assert np.all(upper <= ffr)
        assert 1 <= matrices.k_max <= max(n - 1, 1)
        for k in range(matrices.k_max, n + 1):
            assert_array_equal(matrices.mask(k).values, ffr)


def test_matrices_symmetric():
    rng = make_rng(7)
    graph = random_graph(9, rng, p=0.4)
    matrices = build_graph_matrices(graph, 3, delta_t_min=2.0)
    dist = matrices.distance.values
    np.testing.assert_allclose(dist, dist.T, rtol=1e-12)
    for values in [matrices.adjacency.values, matrices.ffr.values,
                   *(h.values for h in matrices.khops), *(m.values for m in matrices.masks)]:
        assert_array_equal(values, values.T)


def test_build_warns_above_k_max(path4, caplog):
    with caplog.at_level(logging.WARNING, logger="trafficgc.graph"):
        matrices = build_graph_matrices(path4, 4)
    assert matrices.k_max == 3
    assert "exceeds K_max" in caplog.text


def test_connected_subgraph():
    graph = path_graph(5)
    sub, kept = connected_subgraph(graph, 3, start=0)
    assert kept == [0, 1, 2]
    assert sub.node_count == 3 and sub.edge_count == 2
    with pytest.raises(GraphValidationError):
        connected_subgraph(TrafficGraph(4, ((0, 1, 1.0),)), 3)


def test_topology_round_trip(tmp_path):
    graph = TrafficGraph(3, ((0, 1, 1.5), (1, 2, 0.25)), node_free_flow=np.array([60.0, 55.0, 65.0]))
    ids = ["s10", "s20", "s30"]
    paths = save_topology(graph, ids, tmp_path)
    loaded, loaded_ids = load_topology(paths["topology"], paths["node_ids"], paths["speed_limits"])
    assert loaded_ids == ids
    assert loaded.edges == graph.edges
    assert_array_equal(loaded.node_free_flow, graph.node_free_flow)


def test_topology_unknown_node(tmp_path):
    (tmp_path / "ids.txt").write_text("a\nb\n")
    (tmp_path / "edges.csv").write_text("a,zz,1.0\n")
    with pytest.raises(DatasetError, match="zz"):
        load_topology(tmp_path / "edges.csv", tmp_path / "ids.txt")


def test_topology_numeric_token_must_be_listed(tmp_path):
    (tmp_path / "ids.txt").write_text("101\n205\n7\n")
    (tmp_path / "edges.csv").write_text("101,205,1.0\n205,2,1.0\n")
    with pytest.raises(DatasetError, match="'2'"):
        load_topology(tmp_path / "edges.csv", tmp_path / "ids.txt")

    (tmp_path / "edges.csv").write_text("101,205,1.0\n205,7,2.0\n")
    graph, ids = load_topology(tmp_path / "edges.csv", tmp_path / "ids.txt")
    assert ids == ["101", "205", "7"]
    assert graph.edges == ((0, 1, 1.0), (1, 2, 2.0))


def test_topology_bad_speed_limit(tmp_path):
    (tmp_path / "ids.txt").write_text("a\nb\n")
    (tmp_path / "edges.csv").write_text("a,b,1.0\n")
    (tmp_path / "limits.csv").write_text("a,55\nb,fast\n")
    with pytest.raises(DatasetError, match="fast"):
        load_topology(tmp_path / "edges.csv", tmp_path / "ids.txt", tmp_path / "limits.csv")


def test_matrix_csv_round_trip(tmp_path):
    values = np.array([[0.0, 1.0 / 3.0], [2.5, 1e-17]])
    path = write_matrix_csv(values, ["a", "b"], tmp_path / "m.csv", row_labels=True)
    read, ids = read_matrix_csv(path, row_labels=True)
    assert ids == ["a", "b"]
    assert_array_equal(read, values)
