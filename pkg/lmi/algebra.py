"""
Affine matrix expressions over named matrix decision variables.

An expression is ``const + sum_i x_i * coeff_i`` where x is the global
decision vector. Products are only allowed when at least one side is
constant; anything bilinear raises AffineViolation and has to be handled
by a convex reformulation upstream.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from utils.errors import AffineViolation, DimensionError
from utils.tensor_core import as_mat, kron

VAR_KINDS = ("sym", "full", "scalar")


@dataclass(frozen=True)
class MatVar:
    name: str
    kind: str
    rows: int
    cols: int
    offset: int

    def __post_init__(self):
        if self.kind not in VAR_KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == "sym" and self.rows != self.cols:
            raise DimensionError(f"symmetric variable {self.name} must be square")

    @property
    def size(self) -> int:
        """Number of scalar decision entries."""
        if self.kind == "sym":
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    @property
    def indices(self) -> range:
        return range(self.offset, self.offset + self.size)

    def _positions(self):
        if self.kind == "sym":
            return [(i, j) for j in range(self.cols) for i in range(j + 1)]
        return [(i, j) for j in range(self.cols) for i in range(self.rows)]

    def coefficient_terms(self) -> Dict[int, np.ndarray]:
        terms = {}
        for k, (i, j) in enumerate(self._positions()):
            c = np.zeros((self.rows, self.cols))
            c[i, j] = 1.0
            if self.kind == "sym" and i != j:
                c[j, i] = 1.0
            terms[self.offset + k] = c
        return terms

    def unpack(self, x) -> np.ndarray:
        vals = np.asarray(x, dtype=float)[self.offset:self.offset + self.size]
        out = np.zeros((self.rows, self.cols))
        for v, (i, j) in zip(vals, self._positions()):
            out[i, j] = v
            if self.kind == "sym":
                out[j, i] = v
        return out


def as_expr(other) -> "AffineMatExpr":
    if isinstance(other, AffineMatExpr):
        return other
    return AffineMatExpr(as_mat(other))


class AffineMatExpr:
    # numpy defers to our reflected operators (ndarray @ expr -> __rmatmul__)
    __array_ufunc__ = None

    def __init__(self, const, terms: Optional[Dict[int, np.ndarray]] = None):
        self.const = as_mat(const)
        self.terms = {} if terms is None else dict(terms)

    # ----- constructors -----
    @classmethod
    def constant(cls, mat) -> "AffineMatExpr":
        return cls(as_mat(mat))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "AffineMatExpr":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def of(cls, var: MatVar) -> "AffineMatExpr":
        return cls(np.zeros((var.rows, var.cols)), var.coefficient_terms())

    # ----- shape -----
    @property
    def shape(self):
        return self.const.shape

    @property
    def rows(self) -> int:
        return self.const.shape[0]

    @property
    def cols(self) -> int:
        return self.const.shape[1]

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"AffineMatExpr(shape={self.shape}, terms={len(self.terms)})"

    # ----- arithmetic -----
    def _map(self, fn) -> "AffineMatExpr":
        return AffineMatExpr(fn(self.const), {i: fn(c) for i, c in self.terms.items()})

    def __add__(self, other):
        other = as_expr(other)
        if other.shape != self.shape:
            raise DimensionError(f"cannot add {self.shape} and {other.shape}")
        terms = dict(self.terms)
        for i, c in other.terms.items():
            terms[i] = terms[i] + c if i in terms else c
        return AffineMatExpr(self.const + other.const, terms)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        return self._map(lambda c: -c)

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            raise TypeError("use @ for matrix products; * is scaling by a number")
        return self._map(lambda c: scalar * c)

    def __rmul__(self, scalar):
        return self.__mul__(scalar)

    def __matmul__(self, other):
        other = as_expr(other)
        if not other.is_constant:
            if not self.is_constant:
                raise AffineViolation("product of two variable-bearing expressions")
            return other.__rmatmul__(self.const)
        right = other.const
        if self.cols != right.shape[0]:
            raise DimensionError(f"cannot multiply {self.shape} by {right.shape}")
        return self._map(lambda c: c @ right)

    def __rmatmul__(self, other):
        other = as_expr(other)
        if not other.is_constant:
            return other.__matmul__(self)
        left = other.const
        if left.shape[1] != self.rows:
            raise DimensionError(f"cannot multiply {left.shape} by {self.shape}")
        return self._map(lambda c: left @ c)

    @property
    def T(self) -> "AffineMatExpr":
        return self._map(lambda c: c.T)

    def sy(self) -> "AffineMatExpr":
        if self.rows != self.cols:
            raise DimensionError(f"sy needs a square expression, got {self.shape}")
        return self + self.T

    def symmetrized(self) -> "AffineMatExpr":
        return 0.5 * (self + self.T)

    def vec(self) -> "AffineMatExpr":
        return self._map(lambda c: c.reshape(-1, 1, order="F"))

    def kron_left(self, const) -> "AffineMatExpr":
        """kron(const, self)."""
        const = as_mat(const)
        return self._map(lambda c: kron(const, c))

    def kron_right(self, const) -> "AffineMatExpr":
        """kron(self, const)."""
        const = as_mat(const)
        return self._map(lambda c: kron(c, const))

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.const.copy()
        for i, c in self.terms.items():
            out = out + x[i] * c
        return out

    def asymmetry(self) -> float:
        """Largest relative asymmetry over the constant and all coefficients."""
        worst = 0.0
        for c in [self.const, *self.terms.values()]:
            if c.size:
                worst = max(worst, float(np.max(np.abs(c - c.T))) / max(1.0, float(np.max(np.abs(c)))))
        return worst

    def variables(self):
        return sorted(self.terms)


# ============================================================
# ----- COMBINATORS -----
# ============================================================

def const(mat) -> AffineMatExpr:
    return AffineMatExpr.constant(mat)


def var_ref(var: MatVar) -> AffineMatExpr:
    return AffineMatExpr.of(var)


def sy(expr) -> AffineMatExpr:
    return as_expr(expr).sy()


def kron_const(a, b) -> AffineMatExpr:
    """Kronecker product where at most one factor carries variables."""
    a_expr, b_expr = as_expr(a), as_expr(b)
    if not a_expr.is_constant and not b_expr.is_constant:
        raise AffineViolation("kron of two variable-bearing expressions")
    if a_expr.is_constant:
        return b_expr.kron_left(a_expr.const)
    return a_expr.kron_right(b_expr.const)


def blocks(grid: Sequence[Sequence]) -> AffineMatExpr:
    """
    Block assembly. Entries are expressions, arrays or None (zero).
    Every row stripe needs at least one sized entry to fix its height, and
    every column stripe one to fix its width; zero-size stripes vanish.
    """
    n_rows, n_cols = len(grid), len(grid[0])
    heights = [None] * n_rows
    widths = [None] * n_cols
    cells = [[None if e is None else as_expr(e) for e in row] for row in grid]
    for i, row in enumerate(cells):
        if len(row) != n_cols:
            raise DimensionError(f"block row {i} has {len(row)} entries, expected {n_cols}")
        for j, e in enumerate(row):
            if e is None:
                continue
            for dim, store, idx, what in ((e.rows, heights, i, "row"), (e.cols, widths, j, "column")):
                if store[idx] is None:
                    store[idx] = dim
                elif store[idx] != dim:
                    raise DimensionError(f"block ({i}, {j}) breaks {what} size {store[idx]} with {dim}")
    if any(h is None for h in heights) or any(w is None for w in widths):
        raise DimensionError("every block row and column needs at least one sized entry")

    total_r, total_c = sum(heights), sum(widths)
    r_off = np.concatenate([[0], np.cumsum(heights)]).astype(int)
    c_off = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    const_out = np.zeros((total_r, total_c))
    terms: Dict[int, np.ndarray] = {}
    for i, row in enumerate(cells):
        for j, e in enumerate(row):
            if e is None or e.rows == 0 or e.cols == 0:
                continue
            rs = slice(r_off[i], r_off[i + 1])
            cs = slice(c_off[j], c_off[j + 1])
            const_out[rs, cs] += e.const
            for k, c in e.terms.items():
                if k not in terms:
                    terms[k] = np.zeros((total_r, total_c))
                terms[k][rs, cs] += c
    return AffineMatExpr(const_out, terms)


def dsum(*exprs) -> AffineMatExpr:
    exprs = [as_expr(e) for e in exprs]
    k = len(exprs)
    grid = [[None] * k for _ in range(k)]
    for i, e in enumerate(exprs):
        grid[i][i] = e
    return blocks(grid) if k else AffineMatExpr(np.zeros((0, 0)))


def hstack(items) -> AffineMatExpr:
    return blocks([list(items)])


def vstack(items) -> AffineMatExpr:
    return blocks([[e] for e in items])
