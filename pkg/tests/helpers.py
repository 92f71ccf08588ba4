"""Numerical test oracles shared across test modules."""

import numpy as np


def numerical_gradient(fn, arr, h=1e-6):
    """Central finite differences of scalar-valued fn with respect to arr."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        up = fn()
        arr[idx] = orig - h
        down = fn()
        arr[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    scale = np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def two_step_paths(graph, center):
    """Every length-2 walk from ``center`` as (probability, user, tweet).

    Independent enumeration used to validate the closed-form distribution.
    """
    users, _ = graph.tweet_neighbors(center)
    paths = []
    for u in users:
        tweets, _ = graph.user_neighbors(int(u))
        for t in tweets:
            paths.append((1.0 / len(users) / len(tweets), int(u), int(t)))
    return paths


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
