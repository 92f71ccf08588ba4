"""Input validation helpers shared by the estimators and the training API."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .graph import BipartiteGraph


def check_feature_matrix(X, name: str = "X") -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_binary_labels(y, n_rows: int | None = None) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ValidationError(
            f"got {arr.shape[0]} labels for {n_rows} feature rows")
    return arr.astype(np.int64)


def check_indices(idx, n: int, name: str = "indices") -> np.ndarray:
    arr = np.asarray(idx, dtype=np.int64).reshape(-1)
    if arr.size == 0:
        raise ValidationError(f"{name} is empty")
    if arr.min() < 0 or arr.max() >= n:
        raise ValidationError(f"{name} out of range [0, {n})")
    return arr


def check_graph(graph, n_tweets: int | None = None) -> BipartiteGraph:
    if not isinstance(graph, BipartiteGraph):
        raise ValidationError("graph must be a BipartiteGraph")
    if n_tweets is not None and graph.num_tweets != n_tweets:
        raise ValidationError(
            f"graph has {graph.num_tweets} tweets but features have"
            f" {n_tweets} rows")
    return graph
