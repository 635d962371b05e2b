"""
Linear system with a time-varying distributed delay, in decomposed form.

    x'(t) = A1 x + int_{-r(t)}^0 A2~(tau) x(t+tau) dtau + B1 u + int B2~(tau) u(t+tau) dtau + D1 w
    z(t)  = C1 x + int C2~(tau) x(t+tau) dtau + B4 u + int B5~(tau) u(t+tau) dtau + D2 w

with r(t) in [r1, r2]. On [-r1, 0] the kernels are A2 (f_hat1(tau) kron I),
on [-r(t), -r1] they are A3 (f_hat2(tau) kron I); likewise B2/B3, C2/C3 and
B5/B6 with the input dimension p.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from basis.kernel_basis import KernelBasis, check_decomposition, check_ode_closure
from regimes.delay_regime import ChiLayout, Regime, RegimeKind, classify_regime
from utils.errors import DimensionError, InvalidDelayBounds
from utils.logger import setup_logger
from utils.tensor_core import as_mat, kron

logger = setup_logger("delay_system", log_file="delay_system.log")

# kernel name -> (coefficient field, row-dimension attribute, column-dimension attribute, segment)
KERNEL_FIELDS = {
    "a2": ("a2", "n", "n", 1),
    "a3": ("a3", "n", "n", 2),
    "b2": ("b2k", "n", "p", 1),
    "b3": ("b3k", "n", "p", 2),
    "c2": ("c2", "m", "n", 1),
    "c3": ("c3", "m", "n", 2),
    "b5": ("b5k", "m", "p", 1),
    "b6": ("b6k", "m", "p", 2),
}


@dataclass(frozen=True, eq=False)
class DelaySystem:
    a1: np.ndarray
    b1: np.ndarray
    d1: np.ndarray
    c1: np.ndarray
    b4: np.ndarray
    d2: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    b2k: np.ndarray
    b3k: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    b5k: np.ndarray
    b6k: np.ndarray
    r1: float
    r2: float
    basis1: KernelBasis
    basis2: KernelBasis
    raw_kernels: dict = field(default_factory=dict)
    name: str = "system"

    def __post_init__(self):
        self._validate()

    # ----- dimensions -----
    @property
    def n(self) -> int:
        return self.a1.shape[0]

    @property
    def p(self) -> int:
        return self.b1.shape[1]

    @property
    def q(self) -> int:
        return self.d1.shape[1]

    @property
    def m(self) -> int:
        return self.c1.shape[0]

    @property
    def kappa1(self) -> int:
        return self.basis1.kappa

    @property
    def kappa2(self) -> int:
        return self.basis2.kappa

    @property
    def kappa(self) -> int:
        return self.kappa1 + 2 * self.kappa2

    @property
    def rho(self) -> int:
        """rho = (d1 + d2) n, the size of P3."""
        return (self.basis1.d + self.basis2.d) * self.n

    @property
    def r3(self) -> float:
        return self.r2 - self.r1

    @property
    def regime(self) -> Regime:
        return classify_regime(self.r1, self.r2)

    @property
    def has_input(self) -> bool:
        return self.p > 0 and any(
            np.any(mat != 0.0) for mat in (self.b1, self.b2k, self.b3k, self.b4, self.b5k, self.b6k)
        )

    def chi_layout(self) -> ChiLayout:
        return ChiLayout(self.n, self.kappa1, self.kappa2, self.q, self.regime)

    def input_layout(self) -> ChiLayout:
        """Same block pattern with p-wide input blocks (columns of the bold B matrices)."""
        return ChiLayout(self.p, self.kappa1, self.kappa2, self.q, self.regime)

    def _validate(self):
        n, p, q, m = self.n, self.p, self.q, self.m
        expected = {
            "a1": (n, n), "b1": (n, p), "d1": (n, q),
            "c1": (m, n), "b4": (m, p), "d2": (m, q),
            "a2": (n, self.kappa1 * n), "a3": (n, self.kappa2 * n),
            "b2k": (n, self.kappa1 * p), "b3k": (n, self.kappa2 * p),
            "c2": (m, self.kappa1 * n), "c3": (m, self.kappa2 * n),
            "b5k": (m, self.kappa1 * p), "b6k": (m, self.kappa2 * p),
        }
        for key, shape in expected.items():
            got = getattr(self, key).shape
            if got != shape:
                logger.error(f"{self.name}: {key} has shape {got}, expected {shape}")
                raise DimensionError(f"{key} has shape {got}, expected {shape}")

        regime = classify_regime(self.r1, self.r2)
        if regime.kind == RegimeKind.LOWER_ZERO and not self.basis1.is_empty:
            raise InvalidDelayBounds("r1 = 0 requires an empty basis on [-r1, 0]")
        if regime.kind == RegimeKind.POINT and not self.basis2.is_empty:
            raise InvalidDelayBounds("r1 = r2 requires an empty basis on [-r2, -r1]")
        if self.basis1.d + self.basis2.d == 0:
            raise DimensionError("at least one basis needs f functions (d1 + d2 > 0)")
        if not self.basis1.is_empty and tuple(self.basis1.interval) != (-self.r1, 0.0):
            raise DimensionError(f"basis1 interval {self.basis1.interval} != [-r1, 0]")
        if not self.basis2.is_empty and tuple(self.basis2.interval) != (-self.r2, -self.r1):
            raise DimensionError(f"basis2 interval {self.basis2.interval} != [-r2, -r1]")

    # ----- derived systems -----
    def with_delays(self, r1: float, r2: float) -> "DelaySystem":
        """Same kernels on new delay bounds."""
        basis1 = self.basis1 if self.basis1.is_empty else self.basis1.with_interval(-r1, 0.0)
        basis2 = self.basis2 if self.basis2.is_empty else self.basis2.with_interval(-r2, -r1)
        return replace(self, r1=float(r1), r2=float(r2), basis1=basis1, basis2=basis2)

    # ----- closed-loop kernel coefficients -----
    def closed_loop_coefficients(self, k_gain: Optional[np.ndarray] = None) -> dict:
        """
        Coefficients of the closed-loop kernels for u = K x:
        state (A1 + B1K, A2 + B2(I kron K), A3 + B3(I kron K)) and the
        matching output rows.
        """
        k = np.zeros((self.p, self.n)) if k_gain is None else as_mat(k_gain)
        if k.shape != (self.p, self.n):
            raise DimensionError(f"K has shape {k.shape}, expected {(self.p, self.n)}")
        lift1 = kron(np.eye(self.kappa1), k)
        lift2 = kron(np.eye(self.kappa2), k)
        return {
            "a0": self.a1 + self.b1 @ k,
            "a_seg1": self.a2 + self.b2k @ lift1,
            "a_seg2": self.a3 + self.b3k @ lift2,
            "c0": self.c1 + self.b4 @ k,
            "c_seg1": self.c2 + self.b5k @ lift1,
            "c_seg2": self.c3 + self.b6k @ lift2,
        }

    def kernel_values(self, coeff: np.ndarray, segment: int, taus, width: int) -> np.ndarray:
        """Stack of coeff (f_hat(tau) kron I_width) at the given points."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        basis = self.basis1 if segment == 1 else self.basis2
        rows = coeff.shape[0]
        if basis.is_empty:
            return np.zeros((taus.size, rows, width))
        fh = basis.f_hat_values(taus)                         # (N, kappa)
        blocks = coeff.reshape(rows, basis.kappa, width)      # column block j multiplies f_hat_j
        return np.einsum("rjc,kj->krc", blocks, fh)

    # ----- validation -----
    def validate(self, samples: int = 101) -> dict:
        """ODE closure of both bases, and decomposition of any raw kernels supplied."""
        report = {"system": self.name, "checks": []}
        for label, basis in (("basis1", self.basis1), ("basis2", self.basis2)):
            res = check_ode_closure(basis, samples=samples)
            res["target"] = label
            report["checks"].append(res)
        for key, grid in self.raw_kernels.items():
            if key not in KERNEL_FIELDS:
                raise DimensionError(f"unknown raw kernel {key!r}")
            coeff_field, row_dim, _, segment = KERNEL_FIELDS[key]
            basis = self.basis1 if segment == 1 else self.basis2
            if basis.is_empty:
                continue
            res = check_decomposition(grid, getattr(self, coeff_field), basis, getattr(self, row_dim), samples=samples)
            res["target"] = key
            report["checks"].append(res)
        report["passed"] = all(c["passed"] for c in report["checks"])
        return report
