"""
Kernel bases on one delay segment and their Gram geometry.

A basis stacks f_hat(tau) = [phi(tau); f(tau)] (phi entries first) and
carries the matrix M closing the derivative, d f / d tau = M f_hat(tau).
"""

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from basis.expression import Expr, eval_array, parse_expr
from basis.quadrature import DEFAULT_QUAD, QuadConfig, quad_matrix
from utils.errors import DimensionError
from utils.logger import setup_logger
from utils.tensor_core import as_mat, empty, inv_sqrt_spd, kron, sqrt_spd, symmetrize

logger = setup_logger("kernel_basis", log_file="kernel_basis.log")

# --------------------------
# Configuration
# --------------------------
ODE_TOLERANCE = 1e-6
ODE_STEP_FRACTION = 1e-6
DECOMPOSITION_TOLERANCE = 1e-9
CHECK_SAMPLES = 101


@dataclass(frozen=True, eq=False)
class KernelBasis:
    f: Tuple[Expr, ...]
    phi: Tuple[Expr, ...]
    m_matrix: np.ndarray
    interval: Tuple[float, float]

    def __post_init__(self):
        if np.size(self.m_matrix) == 0 and self.d == 0:
            m = empty(0, self.delta)
        else:
            m = as_mat(self.m_matrix)
        object.__setattr__(self, "m_matrix", m)
        if m.shape != (self.d, self.kappa):
            raise DimensionError(f"M has shape {m.shape}, expected {(self.d, self.kappa)}")
        a, b = self.interval
        if not self.is_empty and not a < b:
            raise DimensionError(f"basis interval [{a}, {b}] is degenerate")

    @classmethod
    def from_sources(cls, f: Sequence, phi: Sequence, m_matrix, interval):
        return cls(
            f=tuple(parse_expr(s) for s in f),
            phi=tuple(parse_expr(s) for s in phi),
            m_matrix=np.asarray(m_matrix, dtype=float) if m_matrix is not None else np.zeros((0, 0)),
            interval=(float(interval[0]), float(interval[1])),
        )

    @classmethod
    def empty_basis(cls, interval=(0.0, 0.0)):
        return cls(f=(), phi=(), m_matrix=np.zeros((0, 0)), interval=tuple(interval))

    @property
    def d(self) -> int:
        return len(self.f)

    @property
    def delta(self) -> int:
        return len(self.phi)

    @property
    def kappa(self) -> int:
        return self.d + self.delta

    @property
    def is_empty(self) -> bool:
        return self.kappa == 0

    def with_interval(self, a: float, b: float) -> "KernelBasis":
        return KernelBasis(self.f, self.phi, self.m_matrix, (float(a), float(b)))

    def f_values(self, taus) -> np.ndarray:
        """Stack of f at the given points, shape (len(taus), d)."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if self.d == 0:
            return np.zeros((taus.size, 0))
        return np.column_stack([eval_array(e, taus) for e in self.f])

    def f_hat_values(self, taus) -> np.ndarray:
        """Stack of f_hat = [phi; f], shape (len(taus), delta + d)."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if self.is_empty:
            return np.zeros((taus.size, 0))
        cols = [eval_array(e, taus) for e in self.phi] + [eval_array(e, taus) for e in self.f]
        return np.column_stack(cols)

    def sources(self) -> dict:
        return {
            "f": [e.to_source() for e in self.f],
            "phi": [e.to_source() for e in self.phi],
            "M": self.m_matrix.tolist(),
            "interval": list(self.interval),
        }


@dataclass(frozen=True, eq=False)
class BasisGeometry:
    g: np.ndarray
    f_gram: np.ndarray
    sqrt_g: np.ndarray
    sqrt_g_inv: np.ndarray
    sqrt_f: np.ndarray
    sqrt_f_inv: np.ndarray
    # selector [O_{d,delta} I_d] picking f out of f_hat
    selector: np.ndarray = field(default_factory=lambda: empty(0, 0))

    @property
    def kappa(self) -> int:
        return self.g.shape[0]

    @property
    def d(self) -> int:
        return self.f_gram.shape[0]


def gram(basis: KernelBasis, cfg: QuadConfig = DEFAULT_QUAD, part: str = "f_hat") -> np.ndarray:
    a, b = basis.interval
    values = basis.f_hat_values if part == "f_hat" else basis.f_values
    g = quad_matrix(lambda taus: np.einsum("ki,kj->kij", values(taus), values(taus)), a, b, cfg, vectorized=True)
    return symmetrize(g)


def compute_geometry(basis: KernelBasis, cfg: QuadConfig = DEFAULT_QUAD) -> BasisGeometry:
    if basis.is_empty:
        z = empty(0, 0)
        return BasisGeometry(z, z, z, z, z, z, selector=z)
    g = gram(basis, cfg, "f_hat")
    f_gram = gram(basis, cfg, "f")
    # NotPositiveDefinite here means linearly dependent functions on the interval
    sqrt_g = sqrt_spd(g)
    sqrt_f = sqrt_spd(f_gram) if basis.d else empty(0, 0)
    selector = np.hstack([np.zeros((basis.d, basis.delta)), np.eye(basis.d)])
    geo = BasisGeometry(
        g=g,
        f_gram=f_gram,
        sqrt_g=sqrt_g,
        sqrt_g_inv=inv_sqrt_spd(g),
        sqrt_f=sqrt_f,
        sqrt_f_inv=inv_sqrt_spd(f_gram) if basis.d else empty(0, 0),
        selector=selector,
    )
    logger.debug(f"Geometry on {basis.interval}: kappa={basis.kappa}, cond(G)={np.linalg.cond(g):.3e}")
    return geo


# ============================================================
# ----- STRUCTURE CHECKS -----
# ============================================================

def check_ode_closure(basis: KernelBasis, samples: int = CHECK_SAMPLES, tol: float = ODE_TOLERANCE) -> dict:
    """Central-difference check of d f / d tau = M f_hat(tau) at equispaced points."""
    if samples < 2:
        raise ValueError(f"check_ode_closure needs samples >= 2, got {samples}")
    report = {"check": "ode_closure", "interval": list(basis.interval), "samples": samples, "tol": tol}
    if basis.d == 0:
        report.update(passed=True, worst_tau=None, worst_deviation=0.0)
        return report
    a, b = basis.interval
    h = (b - a) * ODE_STEP_FRACTION
    taus = np.linspace(a + h, b - h, samples)
    fd = (basis.f_values(taus + h) - basis.f_values(taus - h)) / (2.0 * h)
    rhs = basis.f_hat_values(taus) @ basis.m_matrix.T
    dev = np.abs(fd - rhs)
    k, row = np.unravel_index(int(np.argmax(dev)), dev.shape)
    worst = float(dev[k, row])
    report.update(passed=bool(worst <= tol), worst_tau=float(taus[k]), worst_row=int(row), worst_deviation=worst)
    if not report["passed"]:
        logger.warning(f"ODE closure fails on {basis.interval}: row {row} deviates {worst:.3e} at tau={taus[k]:.4f}")
    return report


def check_decomposition(kernel_exprs, coeff, basis: KernelBasis, width: int,
                        samples: int = CHECK_SAMPLES, tol: float = DECOMPOSITION_TOLERANCE) -> dict:
    """Verify kernel(tau) = coeff (f_hat(tau) kron I_c) on sample points of the basis interval."""
    grid = [[parse_expr(e) if not hasattr(e, "evaluate") else e for e in row] for row in kernel_exprs]
    rows = len(grid)
    cols = len(grid[0]) if rows else 0
    coeff = as_mat(coeff) if np.size(coeff) else empty(width, basis.kappa * cols)
    if rows != width or coeff.shape != (width, basis.kappa * cols):
        raise DimensionError(
            f"decomposition: kernel is {rows}x{cols}, coefficient {coeff.shape}, "
            f"expected ({width}, {basis.kappa * cols}) for kappa={basis.kappa}"
        )
    a, b = basis.interval
    taus = np.linspace(a, b, samples)
    fh = basis.f_hat_values(taus)
    worst, worst_tau, worst_entry = 0.0, None, None
    for k, tau in enumerate(taus):
        expected = np.array([[float(e.evaluate(tau)) for e in row] for row in grid]).reshape(rows, cols)
        got = coeff @ kron(fh[k].reshape(-1, 1), np.eye(cols))
        dev = np.abs(expected - got)
        if dev.size and dev.max() > worst:
            worst = float(dev.max())
            worst_tau = float(tau)
            worst_entry = [int(i) for i in np.unravel_index(int(np.argmax(dev)), dev.shape)]
    passed = worst <= tol
    if not passed:
        logger.warning(f"Decomposition fails on {basis.interval}: entry {worst_entry} deviates {worst:.3e} at tau={worst_tau}")
    return {
        "check": "decomposition",
        "interval": [a, b],
        "passed": bool(passed),
        "worst_tau": worst_tau,
        "worst_entry": worst_entry,
        "worst_deviation": worst,
        "tol": tol,
    }
