"""Dense double-precision matrix helpers.

A "matrix" here is a C-contiguous 2-D ``float64`` ndarray. numpy does the
arithmetic; these functions add the shape checks and error types the rest of
the package relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .rng import Rng


def as_matrix(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    return arr


def gaussian_matrix(seed: int, rows: int, cols: int, variance: float) -> np.ndarray:
    """I.i.d. N(0, variance) entries, a pure function of ``seed``."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"invalid dimensions {rows}x{cols}")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    return Rng(seed).normal((rows, cols), variance)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def col_norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->j", a, a))


def fro_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.einsum("ij,ij->", a, a)))


def l1_norm_cols(a: np.ndarray) -> np.ndarray:
    return np.abs(a).sum(axis=0)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a - b


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return c * a


def square(a: np.ndarray) -> np.ndarray:
    return a * a


def div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise ``a / b``; callers add their own epsilon to ``b``."""
    _same_shape(a, b)
    return a / b
