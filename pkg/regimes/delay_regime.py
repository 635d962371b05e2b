"""
Delay-bound regimes and the block layout of the augmented closed-loop vector.

The augmented vector is

    chi = [x(t-r1) | x(t-r2) | x(t) | xi1 (k1 n) | xi2 (k2 n) | xi3 (k2 n) | w (q)]

where xi1 integrates over [-r1, 0], xi2 over [-r(t), -r1] and xi3 over
[-r2, -r(t)]. In the lower-zero regime x(t-r1) coincides with x(t), in the
point regime x(t-r2) coincides with x(t-r1); those blocks are absent from
chi. Builders work on the full logical layout and fold it onto chi with
``ChiLayout.fold``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from utils.errors import InvalidDelayBounds
from utils.logger import setup_logger
from utils.tensor_core import empty

logger = setup_logger("delay_regime", log_file="delay_regime.log")

DELAY_EQ_TOL = 1e-12

CHI_BLOCKS = ("x_r1", "x_r2", "x_t", "xi1", "xi2", "xi3", "w")
STATE_BLOCKS = ("x_r1", "x_r2", "x_t")


class RegimeKind(str, Enum):
    INTERIOR = "interior"
    LOWER_ZERO = "lower_zero"
    POINT = "point"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind

    @property
    def has_x_r1(self) -> bool:
        return self.kind != RegimeKind.LOWER_ZERO

    @property
    def has_x_r2(self) -> bool:
        return self.kind != RegimeKind.POINT

    @property
    def three_hat(self) -> int:
        return 1 + int(self.has_x_r1) + int(self.has_x_r2)

    def one_marker(self, n: int) -> np.ndarray:
        """I_n when r2 > r1, else the 0 x n empty matrix."""
        return np.eye(n) if self.has_x_r2 else empty(0, n)

    def one_hat_marker(self, n: int) -> np.ndarray:
        """I_n when r1 > 0, else the 0 x n empty matrix."""
        return np.eye(n) if self.has_x_r1 else empty(0, n)


def classify_regime(r1: float, r2: float) -> Regime:
    if r2 <= 0.0:
        logger.error(f"Invalid delay bounds: r2={r2} must be positive")
        raise InvalidDelayBounds(f"r2 must be positive, got {r2}")
    if r1 < 0.0:
        logger.error(f"Invalid delay bounds: r1={r1} is negative")
        raise InvalidDelayBounds(f"r1 must be nonnegative, got {r1}")
    if r1 > r2 + DELAY_EQ_TOL:
        logger.error(f"Invalid delay bounds: r1={r1} > r2={r2}")
        raise InvalidDelayBounds(f"r1={r1} exceeds r2={r2}")
    if abs(r2 - r1) <= DELAY_EQ_TOL:
        return Regime(RegimeKind.POINT)
    if r1 <= DELAY_EQ_TOL:
        return Regime(RegimeKind.LOWER_ZERO)
    return Regime(RegimeKind.INTERIOR)


@dataclass(frozen=True)
class ChiLayout:
    n: int
    kappa1: int
    kappa2: int
    q: int
    regime: Regime

    # ----- sizes -----
    def logical_size(self, name: str) -> int:
        return {
            "x_r1": self.n,
            "x_r2": self.n,
            "x_t": self.n,
            "xi1": self.kappa1 * self.n,
            "xi2": self.kappa2 * self.n,
            "xi3": self.kappa2 * self.n,
            "w": self.q,
        }[name]

    def size(self, name: str) -> int:
        if name == "x_r1" and not self.regime.has_x_r1:
            return 0
        if name == "x_r2" and not self.regime.has_x_r2:
            return 0
        return self.logical_size(name)

    @property
    def sizes(self) -> dict:
        return {name: self.size(name) for name in CHI_BLOCKS}

    @property
    def length(self) -> int:
        """L0 = three_hat n + kappa n + q."""
        return int(sum(self.sizes.values()))

    @property
    def logical_length(self) -> int:
        return int(sum(self.logical_size(name) for name in CHI_BLOCKS))

    @property
    def kappa(self) -> int:
        return self.kappa1 + 2 * self.kappa2

    @property
    def n_blocks(self) -> int:
        """Number of n-wide state blocks in chi (three_hat + kappa)."""
        return self.regime.three_hat + self.kappa

    def offset(self, name: str) -> int:
        off = 0
        for blk in CHI_BLOCKS:
            if blk == name:
                return off
            off += self.size(blk)
        raise KeyError(name)

    def slice(self, name: str) -> slice:
        start = self.offset(name)
        return slice(start, start + self.size(name))

    def logical_offset(self, name: str) -> int:
        off = 0
        for blk in CHI_BLOCKS:
            if blk == name:
                return off
            off += self.logical_size(blk)
        raise KeyError(name)

    def logical_slice(self, name: str) -> slice:
        start = self.logical_offset(name)
        return slice(start, start + self.logical_size(name))

    # ----- folding -----
    def target(self, name: str) -> str:
        """chi block that carries the logical block ``name``."""
        if name == "x_r1" and not self.regime.has_x_r1:
            return "x_t"
        if name == "x_r2" and not self.regime.has_x_r2:
            return "x_r1"
        return name

    def fold(self) -> np.ndarray:
        """0/1 matrix E with logical = E @ chi."""
        e = np.zeros((self.logical_length, self.length))
        for name in CHI_BLOCKS:
            size = self.logical_size(name)
            if size == 0:
                continue
            rows = self.logical_slice(name)
            cols = self.slice(self.target(name))
            e[rows, cols] = np.eye(size)
        return e

    def state_fold(self) -> np.ndarray:
        """(3 + kappa) x (three_hat + kappa) block pattern of ``fold`` on n-blocks."""
        names = ["x_r1", "x_r2", "x_t"]
        present = [nm for nm in names if self.size(nm)]
        e = np.zeros((3 + self.kappa, self.n_blocks))
        for i, nm in enumerate(names):
            e[i, present.index(self.target(nm))] = 1.0
        e[3:, len(present):] = np.eye(self.kappa)
        return e
