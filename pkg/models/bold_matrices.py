"""
Constant matrices of the closed-loop form in the augmented vector chi.

    x'  = (A_bold + B1_bold [(I kron K) (+) O_q]) chi
    z   = (C_bold + B2_bold [(I kron K) (+) O_q]) chi

plus the selector I_hat mapping the integral states onto the storage
functional's integrals, and F_hat giving their time derivatives.
"""

from dataclasses import dataclass

import numpy as np

from basis.kernel_basis import BasisGeometry
from models.delay_system import DelaySystem
from regimes.delay_regime import ChiLayout
from utils.errors import DimensionError
from utils.logger import setup_logger
from utils.tensor_core import as_mat, dsum, empty, kron

logger = setup_logger("bold_matrices", log_file="bold_matrices.log")


@dataclass(frozen=True, eq=False)
class BoldMatrices:
    bold_a: np.ndarray
    bold_b1: np.ndarray
    bold_c: np.ndarray
    bold_b2: np.ndarray
    i_hat: np.ndarray            # (d1 + d2) x kappa
    f_hat: np.ndarray            # (d1 + d2) x (three_hat + kappa), folded onto chi
    f_hat_logical: np.ndarray    # (d1 + d2) x (3 + kappa)
    layout: ChiLayout
    input_layout: ChiLayout
    n: int

    @property
    def i_hat_n(self) -> np.ndarray:
        """I_hat kron I_n, rho x kappa n."""
        return kron(self.i_hat, np.eye(self.n))

    @property
    def f_hat_n(self) -> np.ndarray:
        return kron(self.f_hat, np.eye(self.n))

    def gain_lift(self, k_gain) -> np.ndarray:
        """(I_{three_hat + kappa} kron K) (+) O_q."""
        k = as_mat(k_gain)
        return dsum(kron(np.eye(self.layout.n_blocks), k), np.zeros((self.layout.q, self.layout.q)))

    def closed_loop(self, k_gain):
        """Pi_x = A + B1 lift(K) and Sigma = C + B2 lift(K)."""
        lift = self.gain_lift(k_gain)
        return self.bold_a + self.bold_b1 @ lift, self.bold_c + self.bold_b2 @ lift


def _row_matrix(layout: ChiLayout, rows: int, blocks: dict, what: str) -> np.ndarray:
    """Row matrix over chi with named column blocks; blocks not given are zero."""
    out = np.zeros((rows, layout.length))
    for name, mat in blocks.items():
        width = layout.size(name)
        if width == 0:
            continue
        mat = as_mat(mat)
        if mat.shape != (rows, width):
            logger.error(f"{what}: block {name} has shape {mat.shape}, expected {(rows, width)}")
            raise DimensionError(f"{what}: block {name} has shape {mat.shape}, expected {(rows, width)}")
        out[:, layout.slice(name)] = mat
    return out


def _scaled(coeff, sqrt_g, width):
    """coeff (sqrt(G) kron I_width); empty when the segment has no basis."""
    if sqrt_g.size == 0:
        return np.zeros((coeff.shape[0], 0))
    return coeff @ kron(sqrt_g, np.eye(width))


def build_i_hat(sys: DelaySystem, geo1: BasisGeometry, geo2: BasisGeometry) -> np.ndarray:
    b1, b2 = sys.basis1, sys.basis2
    sel_top = np.hstack([
        np.zeros((b1.d, b1.delta)), np.eye(b1.d),
        np.zeros((b1.d, b2.kappa)), np.zeros((b1.d, b2.kappa)),
    ])
    sel_bottom = np.hstack([
        np.zeros((b2.d, b1.kappa)),
        np.zeros((b2.d, b2.delta)), np.eye(b2.d),
        np.zeros((b2.d, b2.delta)), np.eye(b2.d),
    ])
    selector = np.vstack([sel_top, sel_bottom])
    left = dsum(geo1.sqrt_f_inv, geo2.sqrt_f_inv)
    right = dsum(geo1.sqrt_g, geo2.sqrt_g, geo2.sqrt_g)
    return left @ selector @ right


def build_f_hat(sys: DelaySystem, geo1: BasisGeometry, geo2: BasisGeometry) -> np.ndarray:
    """Logical F_hat over [x(t-r1), x(t-r2), x(t), xi1, xi2, xi3]."""
    b1, b2 = sys.basis1, sys.basis2
    k1, k2 = b1.kappa, b2.kappa
    top = np.zeros((b1.d, 3 + k1 + 2 * k2))
    if b1.d:
        f1_0 = b1.f_values([0.0])[0]
        f1_r1 = b1.f_values([-sys.r1])[0]
        top[:, 0] = -geo1.sqrt_f_inv @ f1_r1
        top[:, 2] = geo1.sqrt_f_inv @ f1_0
        top[:, 3:3 + k1] = -geo1.sqrt_f_inv @ b1.m_matrix @ geo1.sqrt_g
    bottom = np.zeros((b2.d, 3 + k1 + 2 * k2))
    if b2.d:
        f2_r1 = b2.f_values([-sys.r1])[0]
        f2_r2 = b2.f_values([-sys.r2])[0]
        bottom[:, 0] = geo2.sqrt_f_inv @ f2_r1
        bottom[:, 1] = -geo2.sqrt_f_inv @ f2_r2
        deriv = -geo2.sqrt_f_inv @ b2.m_matrix @ geo2.sqrt_g
        bottom[:, 3 + k1:3 + k1 + k2] = deriv
        bottom[:, 3 + k1 + k2:] = deriv
    return np.vstack([top, bottom])


def assemble_bold(sys: DelaySystem, geo1: BasisGeometry, geo2: BasisGeometry) -> BoldMatrices:
    if geo1.kappa != sys.kappa1 or geo2.kappa != sys.kappa2:
        raise DimensionError(
            f"geometry sizes ({geo1.kappa}, {geo2.kappa}) do not match bases ({sys.kappa1}, {sys.kappa2})"
        )
    layout = sys.chi_layout()
    in_layout = sys.input_layout()
    n, p, m, q = sys.n, sys.p, sys.m, sys.q

    bold_a = _row_matrix(layout, n, {
        "x_t": sys.a1,
        "xi1": _scaled(sys.a2, geo1.sqrt_g, n),
        "xi2": _scaled(sys.a3, geo2.sqrt_g, n),
        "w": sys.d1,
    }, "A_bold")
    bold_c = _row_matrix(layout, m, {
        "x_t": sys.c1,
        "xi1": _scaled(sys.c2, geo1.sqrt_g, n),
        "xi2": _scaled(sys.c3, geo2.sqrt_g, n),
        "w": sys.d2,
    }, "C_bold")
    bold_b1 = _row_matrix(in_layout, n, {
        "x_t": sys.b1,
        "xi1": _scaled(sys.b2k, geo1.sqrt_g, p),
        "xi2": _scaled(sys.b3k, geo2.sqrt_g, p),
    }, "B1_bold")
    bold_b2 = _row_matrix(in_layout, m, {
        "x_t": sys.b4,
        "xi1": _scaled(sys.b5k, geo1.sqrt_g, p),
        "xi2": _scaled(sys.b6k, geo2.sqrt_g, p),
    }, "B2_bold")

    i_hat = build_i_hat(sys, geo1, geo2) if sys.kappa else empty(sys.basis1.d + sys.basis2.d, 0)
    f_hat_logical = build_f_hat(sys, geo1, geo2)
    f_hat = f_hat_logical @ layout.state_fold()
    logger.debug(f"Assembled bold matrices: L0={layout.length}, regime={layout.regime.kind.value}")
    return BoldMatrices(
        bold_a=bold_a,
        bold_b1=bold_b1,
        bold_c=bold_c,
        bold_b2=bold_b2,
        i_hat=i_hat,
        f_hat=f_hat,
        f_hat_logical=f_hat_logical,
        layout=layout,
        input_layout=in_layout,
        n=n,
    )
