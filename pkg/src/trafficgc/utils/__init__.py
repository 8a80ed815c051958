"""Shared constants and array/file helpers for the forecaster."""

from .helpers import as_float_array, check_finite, check_shape, make_rng, read_matrix_csv, write_matrix_csv

__all__ = [
    "as_float_array",
    "check_finite",
    "check_shape",
    "make_rng",
    "read_matrix_csv",
    "write_matrix_csv",
]
