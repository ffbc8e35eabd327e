"""Finite-difference gradient checking utilities.

These deliberately avoid the autodiff machinery: the point is an independent
oracle. All checks should run on float64 tensors.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

Array = np.ndarray


def numeric_grad(f: Callable[[], float], arr: Array, h: float = 1e-4) -> Array:
    """Central finite differences of scalar-valued f w.r.t. every element of arr."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f()
        flat[i] = keep - h
        down = f()
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return g


def numeric_grad_sampled(f: Callable[[], float], arr: Array,
                         indices: Iterable[tuple], h: float = 1e-4) -> dict[tuple, float]:
    """Central differences at selected (multi-)indices only."""
    out = {}
    for idx in indices:
        keep = arr[idx]
        arr[idx] = keep + h
        up = f()
        arr[idx] = keep - h
        down = f()
        arr[idx] = keep
        out[idx] = (up - down) / (2.0 * h)
    return out


def directional_derivative(f: Callable[[], float], arr: Array, direction: Array,
                           h: float = 1e-4) -> float:
    """Central-difference estimate of <grad f, direction>."""
    keep = arr.copy()
    arr += h * direction
    up = f()
    arr[...] = keep - h * direction
    down = f()
    arr[...] = keep
    return (up - down) / (2.0 * h)


def rel_error(approx: Array | float, exact: Array | float) -> float:
    """max |a - b| / max(1, |a|, |b|), elementwise then reduced."""
    a = np.asarray(approx, dtype=np.float64)
    b = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float((np.abs(a - b) / denom).max())
