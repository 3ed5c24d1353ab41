"""Input validation helpers.

Small converters used at the public boundaries of the package. They
normalize array-likes to float64 ndarrays and raise the package's own
exception types with messages that name the offending argument.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NotSquare, NotSymmetric, ShapeMismatch


def as_float_matrix(x, name: str = "x") -> np.ndarray:
    """Convert to a 2-D float64 array.

    A 1-D input is rejected rather than silently promoted; callers that
    accept vectors use :func:`as_float_vector` instead.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got ndim={arr.ndim}")
    return arr


def as_float_vector(x, name: str = "x") -> np.ndarray:
    """Convert to a 1-D float64 array. Accepts shape (n,), (n,1) or (1,n)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def check_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSquare(f"{name} must be square, got shape {m.shape}")
    return m


def check_symmetric(m: np.ndarray, name: str = "matrix", rtol: float = 1e-9) -> np.ndarray:
    """Require symmetry within a relative tolerance scaled by the matrix norm."""
    check_square(m, name)
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)
    if m.size and float(np.max(np.abs(m - m.T))) > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric within rtol={rtol}")
    return m


def check_matching(a: np.ndarray, b: np.ndarray, axis_a: int, axis_b: int,
                   what: str) -> None:
    if a.shape[axis_a] != b.shape[axis_b]:
        raise ShapeMismatch(
            f"{what}: {a.shape[axis_a]} vs {b.shape[axis_b]}")
