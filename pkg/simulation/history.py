"""Fixed-grid state history with linear interpolation."""

import math
from typing import Callable, Optional

import numpy as np

from utils.errors import DelayOutOfBounds
from utils.logger import setup_logger

logger = setup_logger("history", log_file="history.log")

# --------------------------
# Configuration
# --------------------------
GRID_TOL = 1e-9


class HistoryBuffer:
    """
    Ring buffer of states on the grid t0 + j dt, j >= 0. Times before t0
    are answered by the initial function phi(theta), theta = s - t0 <= 0.
    Capacity is ceil(span / dt) + 2 samples.
    """

    def __init__(self, n: int, dt: float, span: float, t0: float = 0.0,
                 initial: Optional[Callable] = None):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.n = n
        self.dt = float(dt)
        self.t0 = float(t0)
        self.capacity = int(math.ceil(span / dt)) + 2
        self._buf = np.zeros((self.capacity, n))
        self._count = 0
        self._initial = initial if initial is not None else (lambda theta: np.zeros((np.size(theta), n)))

    @property
    def newest_index(self) -> int:
        return self._count - 1

    @property
    def newest_time(self) -> float:
        return self.t0 + self.newest_index * self.dt

    def push(self, x) -> None:
        self._buf[self._count % self.capacity] = np.asarray(x, dtype=float)
        self._count += 1

    def initial_values(self, thetas) -> np.ndarray:
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        return np.asarray(self._initial(thetas), dtype=float).reshape(thetas.size, self.n)

    def lookup(self, times) -> np.ndarray:
        """States at the given times, shape (len(times), n)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.size, self.n))
        before = times < self.t0
        if np.any(before):
            out[before] = self.initial_values(times[before] - self.t0)
        after = ~before
        if not np.any(after):
            return out

        u = (times[after] - self.t0) / self.dt
        newest = self.newest_index
        oldest = max(0, self._count - self.capacity)
        if np.any(u > newest + GRID_TOL) or np.any(u < oldest - GRID_TOL):
            logger.error(f"History lookup outside stored range [{oldest}, {newest}] steps")
            raise DelayOutOfBounds(f"history lookup outside stored window (steps {oldest}..{newest})")
        u = np.clip(u, oldest, newest)
        lo = np.floor(u).astype(int)
        lo = np.minimum(lo, max(newest - 1, oldest))
        frac = (u - lo)[:, None]
        hi = np.minimum(lo + 1, newest)
        x_lo = self._buf[lo % self.capacity]
        x_hi = self._buf[hi % self.capacity]
        out[after] = (1.0 - frac) * x_lo + frac * x_hi
        return out
