"""Span seminorm utilities.

``span(x) = (max x - min x) / 2`` is the sup-norm distance from ``x`` to the
line of constant vectors, and ``center_offset(x)`` is the constant attaining it.
"""

import numpy as np

from .errors import UsageError


def as_vector(x):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        v = v.reshape(-1)
    if v.size == 0:
        raise UsageError("vector must be non-empty")
    if not np.all(np.isfinite(v)):
        raise UsageError("vector entries must be finite")
    return v


def ones(d):
    """The all-ones vector of length ``d``."""
    if d < 1:
        raise UsageError(f"dimension must be >= 1, got {d}")
    return np.ones(d)


def span(x):
    v = as_vector(x)
    return float((v.max() - v.min()) / 2.0)


def center_offset(x):
    """Midpoint of max and min: the unique minimizer of ``||x - c e||_inf``."""
    v = as_vector(x)
    return float((v.max() + v.min()) / 2.0)


def center(x):
    """Shift ``x`` along the all-ones direction so that max + min = 0."""
    v = as_vector(x)
    return v - center_offset(v)


def _pair(x, y):
    a, b = as_vector(x), as_vector(y)
    if a.shape != b.shape:
        raise UsageError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def sup_norm(x):
    return float(np.max(np.abs(as_vector(x))))


def sup_dist(x, y):
    a, b = _pair(x, y)
    return float(np.max(np.abs(a - b)))


def span_dist(x, y):
    a, b = _pair(x, y)
    return span(a - b)
