"""
Dense linear-algebra helpers used across the pipeline.

Matrices are plain 2-D float64 numpy arrays. Zero-sized matrices (0 x k,
k x 0) are valid values: they propagate through products and vanish from
diagonal sums and block assemblies, which is how regime-dependent blocks
drop out of the closed-loop matrices.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from utils.errors import DimensionError, NotPositiveDefinite
from utils.logger import setup_logger

logger = setup_logger("tensor_core", log_file="tensor_core.log")

# --------------------------
# Configuration
# --------------------------
SPD_RELATIVE_TOL = 1e-10


def as_mat(x) -> np.ndarray:
    """Coerce scalars, vectors and nested lists into a 2-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        # a flat list is read as a column, matching the matrix files
        return arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got array with shape {arr.shape}")
    return arr


def empty(rows: int = 0, cols: int = 0) -> np.ndarray:
    return np.zeros((rows, cols))


def kron(a, b) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    shape = (a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])
    if 0 in shape:
        return np.zeros(shape)
    return np.kron(a, b)


def vec(a) -> np.ndarray:
    """Column-stacking vectorization, returned as a column."""
    a = as_mat(a)
    return a.reshape(-1, 1, order="F")


def commutation_matrix(n: int, d: int) -> np.ndarray:
    """K(n,d) with K(n,d) @ vec(A) = vec(A.T) for every n x d matrix A."""
    if n < 0 or d < 0:
        raise DimensionError(f"commutation_matrix needs nonnegative sizes, got ({n}, {d})")
    if n == 0 or d == 0:
        return empty(0, 0)
    size = n * d
    k = np.zeros((size, size))
    for i in range(n):
        for j in range(d):
            # vec(A)[i + j*n] = A[i, j] = vec(A.T)[j + i*d]
            k[j + i * d, i + j * n] = 1.0
    return k


def spd_tolerance(x) -> float:
    eig_max = float(np.max(np.abs(np.linalg.eigvalsh(x)))) if x.size else 0.0
    return SPD_RELATIVE_TOL * max(1.0, eig_max)


def is_symmetric(x, tol: float = 1e-12) -> bool:
    x = as_mat(x)
    if x.shape[0] != x.shape[1]:
        return False
    if x.size == 0:
        return True
    return float(np.max(np.abs(x - x.T))) <= tol * max(1.0, float(np.max(np.abs(x))))


def symmetrize(x) -> np.ndarray:
    x = as_mat(x)
    return 0.5 * (x + x.T)


def _spd_eig(x, what: str):
    x = as_mat(x)
    if x.shape[0] != x.shape[1]:
        raise DimensionError(f"{what}: matrix is not square {x.shape}")
    if not is_symmetric(x, tol=1e-10):
        raise NotPositiveDefinite(f"{what}: matrix is not symmetric")
    w, v = np.linalg.eigh(symmetrize(x))
    tol = spd_tolerance(x)
    if w.size and w.min() <= tol:
        logger.error(f"{what}: min eigenvalue {w.min():.3e} <= tolerance {tol:.3e}")
        raise NotPositiveDefinite(f"{what}: min eigenvalue {w.min():.3e} <= {tol:.3e}")
    return w, v


def sqrt_spd(x) -> np.ndarray:
    """Unique symmetric positive definite square root via eigendecomposition."""
    x = as_mat(x)
    if x.size == 0:
        return empty(0, 0)
    w, v = _spd_eig(x, "sqrt_spd")
    root = (v * np.sqrt(w)) @ v.T
    return symmetrize(root)


def inv_sqrt_spd(x) -> np.ndarray:
    """(sqrt x)^-1, computed from the same eigendecomposition."""
    x = as_mat(x)
    if x.size == 0:
        return empty(0, 0)
    w, v = _spd_eig(x, "inv_sqrt_spd")
    root = (v / np.sqrt(w)) @ v.T
    return symmetrize(root)


def sy(x) -> np.ndarray:
    x = as_mat(x)
    if x.shape[0] != x.shape[1]:
        raise DimensionError(f"sy: matrix is not square {x.shape}")
    return x + x.T


def dsum(*mats) -> np.ndarray:
    """Diagonal sum; 0 x 0 operands are absorbed."""
    mats = [as_mat(m) for m in mats]
    if not mats:
        return empty(0, 0)
    return linalg.block_diag(*mats).astype(float)


def min_eig(x) -> float:
    x = as_mat(x)
    if x.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(symmetrize(x)).min())


def max_eig(x) -> float:
    x = as_mat(x)
    if x.size == 0:
        return float("-inf")
    return float(np.linalg.eigvalsh(symmetrize(x)).max())


# ============================================================
# ----- BLOCK ASSEMBLY -----
# ============================================================

@dataclass(frozen=True)
class BlockLayout:
    row_sizes: tuple
    col_sizes: tuple

    def __post_init__(self):
        if any(s < 0 for s in self.row_sizes) or any(s < 0 for s in self.col_sizes):
            raise DimensionError(f"negative block size in layout {self}")

    @property
    def shape(self):
        return int(sum(self.row_sizes)), int(sum(self.col_sizes))


def assemble_blocks(layout: BlockLayout, blocks: Sequence[Sequence]) -> np.ndarray:
    """
    Dense matrix from a grid of blocks.

    ``None`` entries are zero blocks. Zero-size stripes contribute nothing.
    A block whose shape disagrees with its slot raises DimensionError
    naming the slot.
    """
    if len(blocks) != len(layout.row_sizes):
        raise DimensionError(f"block grid has {len(blocks)} rows, layout expects {len(layout.row_sizes)}")
    out = np.zeros(layout.shape)
    r0 = 0
    for i, rs in enumerate(layout.row_sizes):
        row = blocks[i]
        if len(row) != len(layout.col_sizes):
            raise DimensionError(f"block row {i} has {len(row)} entries, layout expects {len(layout.col_sizes)}")
        c0 = 0
        for j, cs in enumerate(layout.col_sizes):
            blk = row[j]
            if blk is not None:
                blk = as_mat(blk)
                if blk.shape != (rs, cs):
                    raise DimensionError(f"block ({i}, {j}) has shape {blk.shape}, slot expects {(rs, cs)}")
                out[r0:r0 + rs, c0:c0 + cs] = blk
            c0 += cs
        r0 += rs
    return out
