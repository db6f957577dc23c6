"""Small dense linear-algebra helpers used by several modules."""

from __future__ import annotations

import numpy as np


def block_toeplitz(blocks: np.ndarray) -> np.ndarray:
    """Assemble a Hermitian block-Toeplitz matrix from its lower block diagonals.

    ``blocks[n]`` is the block at block position ``(p, q)`` with ``p - q = n``;
    blocks above the diagonal are ``blocks[q - p]`` conjugate-transposed.

    Parameters
    ----------
    blocks : ndarray, shape (N, b, b)

    Returns
    -------
    ndarray, shape (N*b, N*b)
    """
    blocks = np.asarray(blocks)
    n, b, _ = blocks.shape
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    grid = blocks[np.abs(lag)]
    upper = lag < 0
    grid[upper] = np.conj(np.swapaxes(grid[upper], -1, -2))
    return grid.transpose(0, 2, 1, 3).reshape(n * b, n * b)


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Draw circularly-symmetric complex Gaussian samples CN(0, variance)."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def is_unitary(u: np.ndarray, tol: float = 1e-10) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) <= tol
