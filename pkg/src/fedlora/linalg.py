"""Small dense linear algebra helpers and seeded RNG streams.

Everything downstream works on plain float64 numpy arrays; these wrappers
add the shape/index error reporting and the deterministic stream contract.
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...).

    Identical (seed, key) gives an identical draw sequence regardless of how
    many other streams exist or in what order they are consumed, so parallel
    client training cannot reorder draws.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def frobenius_sq(m: Matrix) -> float:
    return float(np.sum(m * m))


def col_norm_sq(m: Matrix, i: int) -> float:
    if not 0 <= i < m.shape[1]:
        raise IndexError(f"column {i} out of range for shape {m.shape}")
    return float(np.sum(m[:, i] ** 2))


def row_norm_sq(m: Matrix, i: int) -> float:
    if not 0 <= i < m.shape[0]:
        raise IndexError(f"row {i} out of range for shape {m.shape}")
    return float(np.sum(m[i, :] ** 2))


def gaussian_matrix(rng: np.random.Generator, rows: int, cols: int, stddev: float) -> Matrix:
    if stddev <= 0:
        raise ValueError(f"stddev must be positive, got {stddev}")
    return rng.normal(0.0, stddev, size=(rows, cols))
