"""Input checking helpers shared across modules."""

from __future__ import annotations

import math
from numbers import Integral

import numpy as np


def check_vector(x, n: int | None = None, name: str = "array") -> np.ndarray:
    """Return ``x`` as a finite float64 1-d array, optionally of length ``n``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_assignment(z, n: int | None = None) -> np.ndarray:
    """Return a treatment vector as uint8, rejecting anything outside {0, 1}."""
    arr = np.asarray(z)
    if arr.ndim != 1:
        raise ValueError(f"treatment vector must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"treatment vector has length {arr.shape[0]}, expected {n}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("treatment vector entries must be 0 or 1")
    return arr.astype(np.uint8)


def check_assignments(Z, n: int) -> np.ndarray:
    """2-d variant of :func:`check_assignment`; rows are assignments."""
    arr = np.asarray(Z)
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(f"assignment matrix must have shape (S, {n}), got {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("assignment entries must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def check_probability(p, name: str = "probability") -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_count(k, lo: int, hi: int | None, name: str) -> int:
    if isinstance(k, bool) or not isinstance(k, (Integral, np.integer)):
        if isinstance(k, float) and k.is_integer():
            k = int(k)
        else:
            raise ValueError(f"{name} must be an integer count, got {k!r}")
    k = int(k)
    if k < lo or (hi is not None and k > hi):
        bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ValueError(f"{name} must lie in {bound}, got {k}")
    return k


def check_index(i, n: int) -> int:
    i = int(i)
    if not 0 <= i < n:
        raise IndexError(f"node index {i} out of range for population of size {n}")
    return i


def frozen(arr: np.ndarray) -> np.ndarray:
    """Mark an array read-only so value objects stay immutable."""
    arr.setflags(write=False)
    return arr
