"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numpy as np

from .exceptions import ShapeError

__all__ = ["check_quadruples", "check_queries"]


def _int_matrix(X, name):
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise ShapeError(f"{name} must hold integer ids")
        arr = as_int
    arr = arr.astype(np.int64, copy=False)
    if arr.size and arr.min() < 0:
        raise ShapeError(f"{name} contains negative ids")
    return arr


def check_quadruples(X, num_entities=None, num_relations=None, num_timestamps=None) -> np.ndarray:
    """Validate an ``(n, 4)`` array of ``(s, r, o, t)`` ids and return it as int64."""
    arr = _int_matrix(X, "quadruples")
    if arr.shape[1] != 4:
        raise ShapeError(f"quadruples need 4 columns (s, r, o, t), got {arr.shape[1]}")
    _check_ranges(arr[:, [0, 2]], num_entities, "entity")
    _check_ranges(arr[:, 1], num_relations, "relation")
    _check_ranges(arr[:, 3], num_timestamps, "timestamp")
    return arr


def check_queries(X, num_entities=None, num_relations=None, num_timestamps=None) -> np.ndarray:
    """Accept ``(s, r, t)`` or ``(s, r, o, t)`` rows; returns ``(s, r, t)``."""
    arr = _int_matrix(X, "queries")
    if arr.shape[1] == 4:
        arr = arr[:, [0, 1, 3]]
    elif arr.shape[1] != 3:
        raise ShapeError(f"queries need 3 or 4 columns, got {arr.shape[1]}")
    _check_ranges(arr[:, 0], num_entities, "entity")
    _check_ranges(arr[:, 1], num_relations, "relation")
    _check_ranges(arr[:, 2], num_timestamps, "timestamp")
    return arr


def _check_ranges(values, bound, what):
    if bound is not None and values.size and values.max() >= bound:
        raise ShapeError(f"{what} id {int(values.max())} out of range (< {bound})")
