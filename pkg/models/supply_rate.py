"""
Quadratic supply rates

    s(z, w) = z' J~' J1^-1 J~ z + 2 z' J2 w + w' J3 w

with the L2-gain preset (J1 = -gamma I, J~ = I, J2 = 0, J3 = gamma I),
the passivity preset (J~ = 0, J2 = I, J3 = 0) and a custom form.
In gamma_mode gamma is a decision variable and the numeric J1/J3 stay unset.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from utils.errors import DimensionMismatch, NonPositiveGamma, NotNegativeDefinite
from utils.logger import setup_logger
from utils.tensor_core import as_mat, is_symmetric, max_eig

logger = setup_logger("supply_rate", log_file="supply_rate.log")


@dataclass(frozen=True, eq=False)
class SupplyRate:
    kind: str
    m: int
    q: int
    j_tilde: np.ndarray
    j2: np.ndarray
    j1: Optional[np.ndarray] = None
    j3: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    gamma_mode: bool = False

    def j1_at(self, gamma: Optional[float] = None) -> np.ndarray:
        if self.gamma_mode:
            return -self._gamma(gamma) * np.eye(self.m)
        return self.j1

    def j3_at(self, gamma: Optional[float] = None) -> np.ndarray:
        if self.gamma_mode:
            return self._gamma(gamma) * np.eye(self.q)
        return self.j3

    def _gamma(self, gamma):
        if gamma is None:
            raise ValueError("gamma_mode supply needs a gamma value to evaluate")
        return float(gamma)

    def value(self, z, w, gamma: Optional[float] = None) -> np.ndarray:
        """s(z, w) for stacked samples: z is (N, m), w is (N, q)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        w = np.atleast_2d(np.asarray(w, dtype=float))
        jz = z @ self.j_tilde.T
        j1_inv = np.linalg.inv(self.j1_at(gamma))
        return (
            np.einsum("ki,ij,kj->k", jz, j1_inv, jz)
            + 2.0 * np.einsum("ki,ij,kj->k", z, self.j2, w)
            + np.einsum("ki,ij,kj->k", w, self.j3_at(gamma), w)
        )

    def describe(self) -> dict:
        out = {"kind": self.kind, "m": self.m, "q": self.q, "gamma_mode": self.gamma_mode}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out


def supply_l2(gamma, m: int, q: int) -> SupplyRate:
    """
    L2-gain supply. ``gamma`` is a positive number, or None / "variable"
    for gamma_mode (gamma minimized by the solver).
    """
    if gamma is None or gamma == "variable":
        return SupplyRate("l2gain", m, q, j_tilde=np.eye(m), j2=np.zeros((m, q)), gamma_mode=True)
    gamma = float(gamma)
    if gamma <= 0.0:
        logger.error(f"L2 supply needs gamma > 0, got {gamma}")
        raise NonPositiveGamma(f"gamma must be positive, got {gamma}")
    return SupplyRate(
        "l2gain", m, q,
        j_tilde=np.eye(m),
        j2=np.zeros((m, q)),
        j1=-gamma * np.eye(m),
        j3=gamma * np.eye(q),
        gamma=gamma,
    )


def _check_negative_definite(j1, what):
    if not is_symmetric(j1) or max_eig(j1) >= 0.0:
        logger.error(f"{what}: J1 must be symmetric negative definite")
        raise NotNegativeDefinite(f"{what}: J1 must be symmetric negative definite")


def supply_passivity(j1, m: int, q: int) -> SupplyRate:
    if m != q:
        logger.error(f"Passivity supply needs m == q, got m={m}, q={q}")
        raise DimensionMismatch(f"passivity needs m == q, got m={m}, q={q}")
    j1 = as_mat(j1)
    if j1.shape != (m, m):
        raise DimensionMismatch(f"J1 has shape {j1.shape}, expected {(m, m)}")
    _check_negative_definite(j1, "passivity")
    return SupplyRate(
        "passivity", m, q,
        j_tilde=np.zeros((m, m)),
        j2=np.eye(m),
        j1=j1,
        j3=np.zeros((q, q)),
    )


def supply_custom(j1, j_tilde, j2, j3, m: int, q: int) -> SupplyRate:
    j1, j_tilde, j2, j3 = as_mat(j1), as_mat(j_tilde), as_mat(j2), as_mat(j3)
    for name, mat, shape in (("J1", j1, (m, m)), ("J~", j_tilde, (m, m)), ("J2", j2, (m, q)), ("J3", j3, (q, q))):
        if mat.shape != shape:
            raise DimensionMismatch(f"{name} has shape {mat.shape}, expected {shape}")
    _check_negative_definite(j1, "custom")
    if not is_symmetric(j3):
        raise DimensionMismatch("J3 must be symmetric")
    return SupplyRate("custom", m, q, j_tilde=j_tilde, j2=j2, j1=j1, j3=j3)
