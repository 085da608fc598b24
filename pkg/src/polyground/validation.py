"""Input validation helpers shared across the metric pipeline."""

from __future__ import annotations

import numpy as np


def check_grid(x, name: str = "grid") -> np.ndarray:
    """Coerce a similarity map or 2D array to a finite float64 grid."""
    arr = np.asarray(getattr(x, "grid", x), dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_mask(x, name: str = "mask") -> np.ndarray:
    """Coerce a cluster mask or 2D array to a boolean grid."""
    arr = np.asarray(getattr(x, "grid", x))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    return arr.astype(bool)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "grids") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} must share dimensions: {a.shape} vs {b.shape}")
