"""Traffic network graph and the matrices derived from it.

All derived matrices are dense N x N float64 arrays over {0, 1} (or miles for
the distance matrix), frozen after construction so they can be shared freely
between the convolution layers, the exporters and the tests.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DatasetError, GraphValidationError, ShapeError
from .utils.constants import (
    DEFAULT_DELTA_T_MIN, DEFAULT_FREE_FLOW_MPH, MINUTES_PER_HOUR,
    NODE_ID_FILE, SPEED_LIMIT_FILE, TOPOLOGY_FILE
)
from .utils.helpers import PathLike

logger = logging.getLogger(__name__)

Edge = Tuple[int, int, float]


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.float64)
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class TrafficGraph:
    """Undirected road network: sensor nodes joined by road segments.

    Attributes:
        node_count: Number of nodes N
        edges: (i, j, length_miles) triples, each undirected pair at most once
        free_flow_mph: Network-wide free-flow speed
        node_free_flow: Optional per-node free-flow speeds overriding the scalar
    """

    node_count: int
    edges: Tuple[Edge, ...]
    free_flow_mph: float = DEFAULT_FREE_FLOW_MPH
    node_free_flow: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(
            (int(i), int(j), float(length)) for i, j, length in self.edges
        ))
        if self.node_free_flow is not None:
            object.__setattr__(self, "node_free_flow", _frozen(self.node_free_flow))
        self._validate()

    def _validate(self):
        n = self.node_count
        if n < 1:
            raise GraphValidationError(f"node_count must be positive, got {n}")
        if not self.free_flow_mph > 0:
            raise GraphValidationError(f"free-flow speed must be positive, got {self.free_flow_mph}")

        seen = set()
        for i, j, length in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise GraphValidationError(f"edge ({i}, {j}) has a node outside [0, {n})")
            if i == j:
                raise GraphValidationError(f"self-loop edge at node {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphValidationError(f"duplicate edge between {key[0]} and {key[1]}")
            seen.add(key)
            if not (np.isfinite(length) and length > 0):
                raise GraphValidationError(f"edge ({i}, {j}) has non-positive length {length}")

        if self.node_free_flow is not None:
            if self.node_free_flow.shape != (n,):
                raise GraphValidationError(
                    f"node_free_flow must have shape ({n},), got {self.node_free_flow.shape}"
                )
            if not np.all(np.isfinite(self.node_free_flow)) or np.any(self.node_free_flow <= 0):
                raise GraphValidationError("every per-node free-flow speed must be positive")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_lengths(self) -> Dict[Tuple[int, int], float]:
        """Map each ordered node pair of an edge to its length (both directions)."""
        lengths = {}
        for i, j, length in self.edges:
            lengths[(i, j)] = length
            lengths[(j, i)] = length
        return lengths

    def node_speeds(self) -> np.ndarray:
        """Per-node free-flow speeds, falling back to the network-wide scalar."""
        if self.node_free_flow is not None:
            return np.array(self.node_free_flow)
        return np.full(self.node_count, float(self.free_flow_mph))


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class KHopNeighborhood:
    order: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Shortest-path road distances in miles; +inf marks unreachable pairs."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True, eq=False)
class FFRMatrix:
    """Free-flow reachability within m time quanta of delta_t minutes."""

    values: np.ndarray
    horizon_steps: int
    time_quantum_min: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True, eq=False)
class SupportMask:
    """Receptive-field pattern of order k: the k-hop matrix times FFR."""

    order: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


def build_adjacency(graph: TrafficGraph) -> AdjacencyMatrix:
    """Build the symmetric {0,1} adjacency matrix with a zero diagonal.

    Args:
        graph: Validated traffic graph

    Returns:
        AdjacencyMatrix with A[i, j] = A[j, i] = 1 for every edge
    """
    n = graph.node_count
    values = np.zeros((n, n))
    for i, j, _ in graph.edges:
        values[i, j] = 1.0
        values[j, i] = 1.0
    return AdjacencyMatrix(values)


def degree_matrix(adjacency: AdjacencyMatrix) -> np.ndarray:
    """Diagonal matrix of node degrees (row sums of A)."""
    return np.diag(adjacency.values.sum(axis=1))


def khop_neighborhood(adjacency: AdjacencyMatrix, k: int) -> KHopNeighborhood:
    """Clipped k-th power of the neighborhood matrix A + I.

    Entry (i, j) is 1 exactly when node j is within k hops of node i,
    the node itself included.

    Args:
        adjacency: Adjacency matrix A
        k: Hop order, at least 1

    Returns:
        KHopNeighborhood of order k
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"hop order k must be a positive integer, got {k!r}")
    n = adjacency.size
    step = adjacency.values + np.eye(n)
    # Clipping after every product keeps entries in {0,1} without changing the support
    reach = np.eye(n)
    for _ in range(int(k)):
        reach = np.minimum(reach @ step, 1.0)
    return KHopNeighborhood(int(k), reach)


def shortest_path_distances(graph: TrafficGraph) -> DistanceMatrix:
    """All-pairs shortest road distance by summed edge lengths (Dijkstra per source).

    Args:
        graph: Traffic graph with positive edge lengths

    Returns:
        DistanceMatrix with +inf between disconnected components
    """
    n = graph.node_count
    if graph.edges:
        rows = [i for i, _, _ in graph.edges]
        cols = [j for _, j, _ in graph.edges]
        data = [length for _, _, length in graph.edges]
        weights = csr_matrix((data, (rows, cols)), shape=(n, n))
    else:
        weights = csr_matrix((n, n))
    dist = dijkstra(weights, directed=False)
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(dist)


def pairwise_free_flow(graph: TrafficGraph, dist: DistanceMatrix) -> np.ndarray:
    """Free-flow speed between every node pair along its shortest path.

    The pair speed is the path length divided by the free-flow travel time,
    where each segment is traversed at the harmonic mean of its two endpoint
    speeds. Among tied shortest paths the fastest one counts. Each unordered
    pair is computed once and mirrored, so the result is symmetric. With no
    per-node speeds this is the network-wide scalar.

    Args:
        graph: Traffic graph carrying the per-node speeds
        dist: Distances from shortest_path_distances

    Returns:
        N x N matrix of speeds in mph (the node's own speed on the diagonal,
        the scalar for unreachable pairs)
    """
    n = graph.node_count
    if graph.node_free_flow is None:
        return np.full((n, n), float(graph.free_flow_mph))

    pace = 1.0 / graph.node_speeds()  # hours per mile
    neighbors: Dict[int, List[Tuple[int, float]]] = {node: [] for node in range(n)}
    for (i, j), length in graph.edge_lengths().items():
        neighbors[j].append((i, length))

    speeds = np.full((n, n), float(graph.free_flow_mph))
    for source in range(n):
        row = dist.values[source]
        hours = np.full(n, np.inf)
        hours[source] = 0.0
        # Visiting targets by increasing distance settles every shortest-path predecessor first
        for target in np.argsort(row, kind="stable"):
            if target == source or not np.isfinite(row[target]):
                continue
            for prev, length in neighbors[int(target)]:
                if np.isclose(row[prev] + length, row[target], rtol=1e-12, atol=1e-12):
                    via = hours[prev] + length * 0.5 * (pace[prev] + pace[target])
                    hours[target] = min(hours[target], via)
            if target > source:
                speeds[source, target] = speeds[target, source] = row[target] / hours[target]
        speeds[source, source] = 1.0 / pace[source]
    return speeds


def free_flow_reachable(dist: DistanceMatrix, speeds: Union[float, np.ndarray],
                        m: int, delta_t_min: float) -> FFRMatrix:
    """Free-flow reachable matrix.

    FFR[i, j] = 1 iff S_ff[i, j] * m * delta_t >= Dist[i, j], with speeds in
    mph, delta_t in minutes and distances in miles. Every node is
    self-reachable.

    Args:
        dist: Distance matrix in miles
        speeds: Scalar or N x N free-flow speeds in mph
        m: Number of time quanta, at least 1
        delta_t_min: Time quantum in minutes

    Returns:
        FFRMatrix over {0, 1}
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if not delta_t_min > 0:
        raise ValueError(f"delta_t must be positive, got {delta_t_min!r}")
    n = dist.values.shape[0]
    speeds = np.broadcast_to(np.asarray(speeds, dtype=np.float64), (n, n))
    if not np.all(np.isfinite(speeds)) or np.any(speeds <= 0):
        raise GraphValidationError("free-flow speeds must be positive")

    reach_miles = speeds * int(m) * float(delta_t_min) / MINUTES_PER_HOUR
    with np.errstate(invalid="ignore"):
        values = (reach_miles - dist.values >= 0).astype(np.float64)
    np.fill_diagonal(values, 1.0)
    return FFRMatrix(values, int(m), float(delta_t_min))


def support_mask(khop: KHopNeighborhood, ffr: FFRMatrix) -> SupportMask:
    """Hadamard product of a k-hop neighborhood with the FFR matrix."""
    if khop.values.shape != ffr.values.shape:
        raise ShapeError(
            f"k-hop matrix {khop.values.shape} and FFR {ffr.values.shape} differ in shape"
        )
    return SupportMask(khop.order, khop.values * ffr.values)


def compute_k_max(adjacency: AdjacencyMatrix, ffr: FFRMatrix) -> int:
    """Smallest hop order from which the support mask no longer changes.

    The mask is compared against its limit at k = N - 1 (every connected pair
    reached), so the returned order is stationary for all larger k even when
    FFR has gaps at intermediate hop distances.
    """
    n = adjacency.size
    horizon = max(n - 1, 1)
    limit = khop_neighborhood(adjacency, horizon).values * ffr.values
    step = adjacency.values + np.eye(n)
    reach = np.eye(n)
    for k in range(1, horizon + 1):
        reach = np.minimum(reach @ step, 1.0)
        if np.array_equal(reach * ffr.values, limit):
            return k
    return horizon


@dataclass(frozen=True, eq=False)
class GraphMatrices:
    """Every matrix the models need, built once per graph and hop order."""

    adjacency: AdjacencyMatrix
    degree: np.ndarray
    khops: Tuple[KHopNeighborhood, ...]
    distance: DistanceMatrix
    ffr: FFRMatrix
    masks: Tuple[SupportMask, ...]
    k_max: int

    @property
    def order(self) -> int:
        return len(self.masks)

    @property
    def node_count(self) -> int:
        return self.adjacency.size

    def mask(self, k: int) -> SupportMask:
        """Support mask of hop order k (1-based)."""
        return self.masks[k - 1]


def build_graph_matrices(graph: TrafficGraph, k: int, m: Optional[int] = None,
                         delta_t_min: float = DEFAULT_DELTA_T_MIN) -> GraphMatrices:
    """Derive A, D, the k-hop matrices, Dist, FFR and the support masks.

    Args:
        graph: Traffic graph
        k: Largest hop order K
        m: FFR horizon in time quanta (defaults to K)
        delta_t_min: Time quantum in minutes

    Returns:
        GraphMatrices bundle
    """
    if m is None:
        m = k
    adjacency = build_adjacency(graph)
    khops = tuple(khop_neighborhood(adjacency, order) for order in range(1, k + 1))
    distance = shortest_path_distances(graph)
    speeds = pairwise_free_flow(graph, distance)
    ffr = free_flow_reachable(distance, speeds, m, delta_t_min)
    masks = tuple(support_mask(khop, ffr) for khop in khops)
    k_max = compute_k_max(adjacency, ffr)

    logger.info("Graph: %d nodes, %d edges, K=%d, m=%d, K_max=%d",
                graph.node_count, graph.edge_count, k, m, k_max)
    if k > k_max:
        logger.warning("K=%d exceeds K_max=%d; masks above K_max repeat", k, k_max)

    return GraphMatrices(
        adjacency=adjacency,
        degree=degree_matrix(adjacency),
        khops=khops,
        distance=distance,
        ffr=ffr,
        masks=masks,
        k_max=k_max,
    )


def connected_subgraph(graph: TrafficGraph, size: int, start: int = 0) -> Tuple[TrafficGraph, List[int]]:
    """Breadth-first connected subset of the network.

    Args:
        graph: Full traffic graph
        size: Number of nodes to keep
        start: Node where the search begins

    Returns:
        Tuple of (subgraph re-indexed 0..size-1, kept original indices in new order)
    """
    neighbors: Dict[int, List[int]] = {i: [] for i in range(graph.node_count)}
    for i, j, _ in graph.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)

    kept, queue, seen = [], deque([start]), {start}
    while queue and len(kept) < size:
        node = queue.popleft()
        kept.append(node)
        for nxt in sorted(neighbors[node]):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    if len(kept) < size:
        raise GraphValidationError(
            f"component of node {start} has only {len(kept)} nodes, {size} requested"
        )

    index = {old: new for new, old in enumerate(kept)}
    edges = [(index[i], index[j], length) for i, j, length in graph.edges
             if i in index and j in index]
    node_free_flow = None
    if graph.node_free_flow is not None:
        node_free_flow = graph.node_free_flow[kept]
    return TrafficGraph(len(kept), tuple(edges), graph.free_flow_mph, node_free_flow), kept


def read_node_ids(path: PathLike) -> List[str]:
    """One sensor identifier per line; the line number is the node index."""
    with open(path, encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path}: duplicate node identifiers")
    return ids


def _resolve_node(token: str, index: Dict[str, int], path: PathLike) -> int:
    token = token.strip()
    if token in index:
        return index[token]
    raise DatasetError(f"{path}: unknown node id {token!r}")


def load_topology(edges_csv: PathLike, node_id_file: PathLike,
                  speed_limit_file: Optional[PathLike] = None,
                  free_flow_mph: float = DEFAULT_FREE_FLOW_MPH) -> Tuple[TrafficGraph, List[str]]:
    """Read the edge list, node ids and optional speed limits.

    Args:
        edges_csv: `node_i,node_j,length_miles` per line
        node_id_file: One sensor identifier per line
        speed_limit_file: Optional `node_id,free_flow_mph` per line
        free_flow_mph: Speed for nodes without a listed limit

    Returns:
        Tuple of (TrafficGraph, node ids in index order)
    """
    node_ids = read_node_ids(node_id_file)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    n = len(node_ids)

    try:
        frame = pd.read_csv(edges_csv, header=None, names=["node_i", "node_j", "length_miles"],
                            dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=["node_i", "node_j", "length_miles"])
    edges = []
    for row in frame.itertuples(index=False):
        try:
            length = float(row.length_miles)
        except (TypeError, ValueError):
            raise DatasetError(f"{edges_csv}: non-numeric length {row.length_miles!r}") from None
        edges.append((_resolve_node(str(row.node_i), index, edges_csv),
                      _resolve_node(str(row.node_j), index, edges_csv), length))

    node_free_flow = None
    if speed_limit_file is not None:
        limits = pd.read_csv(speed_limit_file, header=None, names=["node_id", "mph"], dtype=str)
        node_free_flow = np.full(n, float(free_flow_mph))
        for row in limits.itertuples(index=False):
            try:
                mph = float(row.mph)
            except (TypeError, ValueError):
                raise DatasetError(f"{speed_limit_file}: non-numeric speed limit {row.mph!r}") from None
            node_free_flow[_resolve_node(str(row.node_id), index, speed_limit_file)] = mph

    graph = TrafficGraph(n, tuple(edges), float(free_flow_mph), node_free_flow)
    return graph, node_ids


def save_topology(graph: TrafficGraph, node_ids: Sequence[str], out_dir: PathLike) -> Dict[str, Path]:
    """Write topology, node-id and (when per-node speeds exist) speed-limit files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"topology": out_dir / TOPOLOGY_FILE, "node_ids": out_dir / NODE_ID_FILE}

    rows = [(node_ids[i], node_ids[j], repr(length)) for i, j, length in graph.edges]
    pd.DataFrame(rows, columns=["node_i", "node_j", "length_miles"]).to_csv(
        paths["topology"], header=False, index=False
    )
    paths["node_ids"].write_text("".join(f"{node_id}\n" for node_id in node_ids), encoding="utf-8")

    if graph.node_free_flow is not None:
        paths["speed_limits"] = out_dir / SPEED_LIMIT_FILE
        pd.DataFrame(
            {"node_id": list(node_ids), "mph": graph.node_free_flow}
        ).to_csv(paths["speed_limits"], header=False, index=False)
    return paths
