"""Speed data ingestion, cleaning, scaling, windowing and a synthetic generator."""

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DatasetError
from .graph import TrafficGraph, read_node_ids
from .utils.constants import (
    DEFAULT_DELTA_T_MIN, DEFAULT_FREE_FLOW_MPH, DEFAULT_SEQ_LEN, DEFAULT_SPLIT,
    IMPUTE_FFILL_BFILL, IMPUTE_NODE_MEAN, IMPUTE_POLICIES, SYNTHETIC_DROP_RANGE,
    SYNTHETIC_EDGE_MILES, SYNTHETIC_EVENT_RATE, SYNTHETIC_MIN_NODES, SYNTHETIC_MIN_STEPS,
    SYNTHETIC_NOISE_MPH, SYNTHETIC_RECOVERY, SYNTHETIC_SPREAD, SYNTHETIC_START,
    TOPOLOGY_GRID, TOPOLOGY_PATH, TOPOLOGY_RING, TOPOLOGIES
)
from .utils.helpers import PathLike, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormalizationRecord:
    """How speeds were scaled: value / scale, scale = train-split maximum."""

    method: str
    scale: float
    train_rows: int


@dataclass(frozen=True, eq=False)
class SpeedDataset:
    """Time x N speed matrix in mph (or normalized units once scaled).

    Attributes:
        speeds: Array of shape (rows, N); NaN marks a missing reading
        timestamps: Strictly increasing, constant step of delta_t_min
        node_ids: Column identifiers in graph index order
        delta_t_min: Sampling interval in minutes
        normalization: Set once normalize() has been applied
        imputed_cells: Number of cells filled by impute_missing
    """

    speeds: np.ndarray
    timestamps: pd.DatetimeIndex
    node_ids: Tuple[str, ...]
    delta_t_min: float = DEFAULT_DELTA_T_MIN
    normalization: Optional[NormalizationRecord] = None
    imputed_cells: int = 0

    def __post_init__(self):
        speeds = np.array(self.speeds, dtype=np.float64)
        speeds.flags.writeable = False
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "node_ids", tuple(str(n) for n in self.node_ids))
        object.__setattr__(self, "timestamps", pd.DatetimeIndex(self.timestamps))
        if speeds.ndim != 2 or speeds.shape[1] != len(self.node_ids):
            raise DatasetError(f"speeds shape {speeds.shape} does not match {len(self.node_ids)} node ids")
        if len(self.timestamps) != speeds.shape[0]:
            raise DatasetError(f"{len(self.timestamps)} timestamps for {speeds.shape[0]} rows")

    @property
    def rows(self) -> int:
        return self.speeds.shape[0]

    @property
    def node_count(self) -> int:
        return self.speeds.shape[1]

    @property
    def missing_cells(self) -> int:
        return int(np.isnan(self.speeds).sum())

    def select_nodes(self, indices: Sequence[int]) -> "SpeedDataset":
        """Keep the given columns, in the given order."""
        indices = list(indices)
        return replace(self, speeds=self.speeds[:, indices],
                       node_ids=tuple(self.node_ids[i] for i in indices))


@dataclass(frozen=True)
class WindowedSample:
    """T input rows and the row that immediately follows them."""

    input: np.ndarray
    target: np.ndarray


@dataclass(frozen=True, eq=False)
class WindowSplit:
    """All windows of one chronological split, stored as stacked arrays.

    Attributes:
        inputs: (windows, T, N)
        targets: (windows, N)
        target_rows: Dataset row index of each target
    """

    name: str
    inputs: np.ndarray
    targets: np.ndarray
    target_rows: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, index: int) -> WindowedSample:
        return WindowedSample(self.inputs[index], self.targets[index])

    def __iter__(self) -> Iterator[WindowedSample]:
        for index in range(len(self)):
            yield self[index]

    def batches(self, batch_size: int,
                rng: Optional[np.random.Generator] = None) -> Iterator[np.ndarray]:
        """Yield index arrays of at most batch_size windows (shuffled when rng is given)."""
        order = np.arange(len(self))
        if rng is not None:
            order = rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            yield order[start:start + batch_size]


def _check_rectangular(path: PathLike) -> int:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if row and len(row) != width:
                raise DatasetError(f"{path}:{lineno}: ragged row with {len(row)} fields, header has {width}")
    return width


def _missing_ranges(timestamps: pd.DatetimeIndex, step: pd.Timedelta) -> List[str]:
    ranges = []
    gaps = np.flatnonzero(timestamps[1:] - timestamps[:-1] != step)
    for g in gaps:
        before, after = timestamps[g], timestamps[g + 1]
        if after <= before:
            ranges.append(f"non-increasing timestamp {after.isoformat()} after {before.isoformat()}")
        elif (after - before) % step:
            ranges.append(f"irregular step between {before.isoformat()} and {after.isoformat()}")
        else:
            ranges.append(f"{(before + step).isoformat()} .. {(after - step).isoformat()}")
    return ranges


def load_speed_csv(path: PathLike, node_id_file: Optional[PathLike] = None,
                   delta_t_min: float = DEFAULT_DELTA_T_MIN) -> SpeedDataset:
    """Read `timestamp,<id1>,<id2>,...` speed tables.

    Args:
        path: Speed CSV; empty cells are missing readings
        node_id_file: Node ids in graph index order (header order if None)
        delta_t_min: Expected sampling interval in minutes

    Returns:
        SpeedDataset with columns in graph index order (missing values kept as NaN)
    """
    _check_rectangular(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[1] < 2:
        raise DatasetError(f"{path}: need a timestamp column and at least one node column")

    columns = [str(c) for c in frame.columns[1:]]
    node_ids = read_node_ids(node_id_file) if node_id_file is not None else columns
    known = set(node_ids)
    for column in columns:
        if column not in known:
            raise DatasetError(f"{path}: column {column!r} is not in the node-id file")
    absent = [n for n in node_ids if n not in set(columns)]
    if absent:
        raise DatasetError(f"{path}: no column for node ids {absent}")

    speeds = np.empty((len(frame), len(node_ids)))
    for index, node_id in enumerate(node_ids):
        raw = frame[node_id].str.strip()
        values = pd.to_numeric(raw.replace("", np.nan), errors="coerce")
        bad = values.isna() & (raw != "") & (raw.str.lower() != "nan")
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetError(f"{path}: non-numeric speed {raw.iloc[row]!r} in column {node_id!r}, row {row + 2}")
        speeds[:, index] = values.to_numpy(dtype=np.float64)

    try:
        timestamps = pd.DatetimeIndex(pd.to_datetime(frame.iloc[:, 0], format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"{path}: bad timestamp ({exc})") from None
    problems = _missing_ranges(timestamps, pd.Timedelta(minutes=delta_t_min))
    if problems:
        raise DatasetError(f"{path}: timestamp gaps: " + "; ".join(problems))

    dataset = SpeedDataset(speeds, timestamps, node_ids, delta_t_min)
    logger.info("Loaded %s: %d rows x %d nodes, %d missing cells",
                path, dataset.rows, dataset.node_count, dataset.missing_cells)
    return dataset


def save_speed_csv(dataset: SpeedDataset, path: PathLike) -> Path:
    """Write the dataset in the format load_speed_csv reads."""
    frame = pd.DataFrame(dataset.speeds, columns=list(dataset.node_ids))
    frame.insert(0, "timestamp", [ts.isoformat() for ts in dataset.timestamps])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", na_rep="")
    return path


def impute_missing(dataset: SpeedDataset, policy: str = IMPUTE_FFILL_BFILL) -> SpeedDataset:
    """Fill missing readings.

    Args:
        dataset: Dataset that may contain NaN
        policy: "ffill-bfill" (carry the last reading forward, then the first
            reading backward) or "node-mean"

    Returns:
        Dataset without NaN; imputed_cells holds the number of filled cells
    """
    if policy not in IMPUTE_POLICIES:
        raise ValueError(f"unknown imputation policy {policy!r}; choose from {IMPUTE_POLICIES}")
    frame = pd.DataFrame(dataset.speeds)
    empty = frame.columns[frame.isna().all()].tolist()
    if empty:
        raise DatasetError(f"no observed speeds for nodes {[dataset.node_ids[c] for c in empty]}")

    missing = int(frame.isna().to_numpy().sum())
    if policy == IMPUTE_FFILL_BFILL:
        filled = frame.ffill().bfill()
    else:
        filled = frame.fillna(frame.mean())
    if missing:
        logger.warning("Imputed %d missing cells with %s", missing, policy)
    return replace(dataset, speeds=filled.to_numpy(), imputed_cells=dataset.imputed_cells + missing)


def split_bounds(rows: int, fractions: Sequence[float]) -> List[Tuple[int, int]]:
    """Chronological [start, stop) row ranges; the last split takes the remainder."""
    fractions = tuple(float(f) for f in fractions)
    if not fractions or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be positive and sum to 1, got {fractions}")
    bounds, start = [], 0
    for index, fraction in enumerate(fractions):
        stop = rows if index == len(fractions) - 1 else start + int(rows * fraction)
        bounds.append((start, stop))
        start = stop
    return bounds


def normalize(dataset: SpeedDataset,
              split: Sequence[float] = DEFAULT_SPLIT) -> Tuple[SpeedDataset, NormalizationRecord]:
    """Divide by the maximum speed of the training split.

    Args:
        dataset: Dataset in mph
        split: Split fractions; only the first (training) range sets the scale

    Returns:
        Tuple of (scaled dataset, record)
    """
    if dataset.normalization is not None:
        raise DatasetError("dataset is already normalized")
    _, train_stop = split_bounds(dataset.rows, split)[0]
    if train_stop == 0:
        raise DatasetError("training split is empty")
    scale = float(np.nanmax(dataset.speeds[:train_stop]))
    if not scale > 0:
        raise DatasetError(f"training split maximum speed is {scale}; cannot normalize")
    record = NormalizationRecord("train-max", scale, train_stop)
    return replace(dataset, speeds=dataset.speeds / scale, normalization=record), record


def denormalize(values: np.ndarray, record: Optional[NormalizationRecord]) -> np.ndarray:
    """Map normalized values back to mph."""
    values = np.asarray(values, dtype=np.float64)
    if record is None:
        return values
    return values * record.scale


def make_windows(dataset: SpeedDataset, seq_len: int = DEFAULT_SEQ_LEN,
                 split: Sequence[float] = DEFAULT_SPLIT) -> Tuple[WindowSplit, ...]:
    """Sliding (T inputs, next row target) windows inside each chronological split.

    Args:
        dataset: Dataset without missing values
        seq_len: Input length T
        split: Split fractions, e.g. (0.7, 0.1, 0.2) or (1.0,)

    Returns:
        One WindowSplit per fraction; a split of r rows yields r - T windows
    """
    if seq_len < 1:
        raise ValueError(f"sequence length must be positive, got {seq_len}")
    if dataset.missing_cells:
        raise DatasetError(f"{dataset.missing_cells} missing cells; impute before windowing")

    names = ("train", "validation", "test") if len(split) == 3 else tuple(f"split{i}" for i in range(len(split)))
    result = []
    for name, (start, stop) in zip(names, split_bounds(dataset.rows, split)):
        rows = stop - start
        if rows < seq_len + 1:
            raise DatasetError(f"{name} split has {rows} rows; needs at least T+1 = {seq_len + 1}")
        block = dataset.speeds[start:stop]
        count = rows - seq_len
        inputs = np.stack([block[w:w + seq_len] for w in range(count)])
        targets = block[seq_len:]
        result.append(WindowSplit(name, inputs, targets, np.arange(start + seq_len, stop)))
    return tuple(result)


def _synthetic_edges(nodes: int, topology: str) -> Tuple[List[Tuple[int, int, float]], np.ndarray]:
    """Edges plus each node's downstream neighbor (-1 when it has none)."""
    downstream = np.full(nodes, -1)
    edges = []
    if topology == TOPOLOGY_RING:
        for i in range(nodes):
            edges.append((i, (i + 1) % nodes, SYNTHETIC_EDGE_MILES))
            downstream[i] = (i + 1) % nodes
    elif topology == TOPOLOGY_PATH:
        for i in range(nodes - 1):
            edges.append((i, i + 1, SYNTHETIC_EDGE_MILES))
            downstream[i] = i + 1
    else:
        cols = int(np.ceil(np.sqrt(nodes)))
        for i in range(nodes):
            if (i + 1) % cols and i + 1 < nodes:
                edges.append((i, i + 1, SYNTHETIC_EDGE_MILES))
                downstream[i] = i + 1
            if i + cols < nodes:
                edges.append((i, i + cols, SYNTHETIC_EDGE_MILES))
    return edges, downstream


def generate_synthetic(nodes: int, topology: str = TOPOLOGY_RING, steps: int = 5000,
                       seed: Optional[int] = 0, event_rate: float = SYNTHETIC_EVENT_RATE,
                       noise_mph: float = SYNTHETIC_NOISE_MPH,
                       events: Optional[Sequence[Tuple[int, int, float]]] = None,
                       delta_t_min: float = DEFAULT_DELTA_T_MIN) -> Tuple[TrafficGraph, SpeedDataset]:
    """Congestion waves on a small network at free flow.

    Every node starts at the free-flow speed. A congestion event removes speed
    at one node; each step a node keeps part of its own deficit and inherits
    part of its downstream neighbor's deficit from the previous step, so a
    slowdown travels one hop upstream per step while recovering. Observation
    noise is uniform and bounded.

    Args:
        nodes: Number of nodes (at least 3)
        topology: "ring", "path" or "grid"
        steps: Number of 5-minute rows (at least 100)
        seed: Seed for events and noise
        event_rate: Probability of a new event per node per step
        noise_mph: Half-width of the uniform observation noise
        events: Explicit (node, step, drop_mph) events replacing the random ones
        delta_t_min: Sampling interval in minutes

    Returns:
        Tuple of (TrafficGraph with 1-mile edges at 60 mph, SpeedDataset in mph)
    """
    if nodes < SYNTHETIC_MIN_NODES:
        raise ValueError(f"synthetic network needs at least {SYNTHETIC_MIN_NODES} nodes, got {nodes}")
    if steps < SYNTHETIC_MIN_STEPS:
        raise ValueError(f"synthetic series needs at least {SYNTHETIC_MIN_STEPS} steps, got {steps}")
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}; choose from {TOPOLOGIES}")

    rng = make_rng(seed)
    edges, downstream = _synthetic_edges(nodes, topology)
    has_down = downstream >= 0
    free_flow = DEFAULT_FREE_FLOW_MPH

    scheduled = np.zeros((steps, nodes))
    if events is not None:
        for node, step, drop in events:
            scheduled[step, node] += drop
    else:
        fired = rng.random((steps, nodes)) < event_rate
        scheduled[fired] = rng.uniform(*SYNTHETIC_DROP_RANGE, size=int(fired.sum()))

    speeds = np.empty((steps, nodes))
    deficit = np.zeros(nodes)
    for t in range(steps):
        inherited = np.where(has_down, deficit[np.where(has_down, downstream, 0)], 0.0)
        deficit = np.clip(SYNTHETIC_RECOVERY * deficit + SYNTHETIC_SPREAD * inherited + scheduled[t],
                          0.0, free_flow)
        speeds[t] = free_flow - deficit

    if noise_mph > 0:
        speeds = np.clip(speeds + rng.uniform(-noise_mph, noise_mph, size=speeds.shape), 0.0, None)

    node_ids = [f"S{i:03d}" for i in range(nodes)]
    timestamps = pd.date_range(SYNTHETIC_START, periods=steps, freq=pd.Timedelta(minutes=delta_t_min))
    graph = TrafficGraph(nodes, tuple(edges), free_flow)
    logger.info("Synthetic %s network: %d nodes, %d steps, %d events",
                topology, nodes, steps, int(np.count_nonzero(scheduled)))
    return graph, SpeedDataset(speeds, timestamps, node_ids, delta_t_min)
