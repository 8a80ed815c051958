"""Helper functions and utilities."""

from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import NonFiniteError, ShapeError

__all__ = [
    "PathLike", "as_float_array", "check_finite", "check_shape",
    "make_rng", "read_matrix_csv", "write_matrix_csv",
]

PathLike = Union[str, Path]


def as_float_array(values, name: str, ndim: Optional[int] = None) -> np.ndarray:
    """Convert to a float64 array and reject NaN/Inf.

    Args:
        values: Array-like input
        name: Component name used in error messages
        ndim: Required number of dimensions (any if None)

    Returns:
        A float64 ndarray (a copy when a conversion was needed)
    """
    array = np.asarray(values, dtype=np.float64)
    if ndim is not None and array.ndim != ndim:
        raise ShapeError(f"{name}: expected {ndim}-d array, got shape {array.shape}")
    check_finite(array, name)
    return array


def check_finite(array: np.ndarray, name: str) -> None:
    """Raise NonFiniteError naming the component when any entry is NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(name)


def check_shape(array: np.ndarray, shape: Tuple[int, ...], name: str) -> None:
    """Raise ShapeError when array.shape differs from shape."""
    if array.shape != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {array.shape}")


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Seeded generator; every random draw in the package goes through one."""
    return np.random.default_rng(seed)


def write_matrix_csv(values: np.ndarray, node_ids: Sequence[str], path: PathLike,
                     row_labels: bool = False) -> Path:
    """Write an N x N matrix as CSV with a header row of node identifiers.

    Args:
        values: Square matrix aligned with node_ids
        node_ids: Node identifiers in graph index order
        path: Destination file
        row_labels: Also label each row with its node id

    Returns:
        The written path
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(node_ids), len(node_ids)):
        raise ShapeError(
            f"matrix shape {values.shape} does not match {len(node_ids)} node ids"
        )
    frame = pd.DataFrame(values, columns=list(node_ids))
    if row_labels:
        frame.index = pd.Index(list(node_ids), name="node_id")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=row_labels, float_format="%.17g")
    return path


def read_matrix_csv(path: PathLike, row_labels: bool = False) -> Tuple[np.ndarray, list]:
    """Read back a matrix written by write_matrix_csv.

    Returns:
        Tuple of (values, node ids from the header)
    """
    frame = pd.read_csv(path, index_col=0 if row_labels else None)
    return frame.to_numpy(dtype=np.float64), [str(c) for c in frame.columns]
