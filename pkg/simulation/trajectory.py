from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd

from utils.logger import setup_logger

logger = setup_logger("trajectory", log_file="trajectory.log")


@dataclass
class Trajectory:
    """
    Simulated closed-loop signals on the fundamental grid.
    Rows are appended by the engine, then ``freeze`` turns them into read-only
    arrays; after that the trajectory no longer accepts rows.
    """
    n: int
    p: int
    m: int
    q: int
    dt: float
    t0: float = 0.0
    initial: Optional[Callable] = field(default=None, repr=False)
    rows: list = field(default_factory=list, repr=False)
    frozen: bool = False

    def append(self, t: float, x, u, z, w, r: float):
        if self.frozen:
            raise RuntimeError("trajectory is frozen")
        self.rows.append((float(t), np.array(x, dtype=float), np.array(u, dtype=float),
                          np.array(z, dtype=float), np.array(w, dtype=float), float(r)))

    def freeze(self) -> "Trajectory":
        def stack(i, width):
            if not self.rows:
                return np.zeros((0, width))
            arr = np.vstack([row[i].reshape(1, width) for row in self.rows])
            arr.setflags(write=False)
            return arr

        self._t = np.array([row[0] for row in self.rows])
        self._x = stack(1, self.n)
        self._u = stack(2, self.p)
        self._z = stack(3, self.m)
        self._w = stack(4, self.q)
        self._r = np.array([row[5] for row in self.rows])
        self._t.setflags(write=False)
        self._r.setflags(write=False)
        self.frozen = True
        logger.debug(f"Trajectory frozen with {len(self.rows)} rows")
        return self

    def _require_frozen(self):
        if not self.frozen:
            self.freeze()

    # ----- signals -----
    @property
    def t(self) -> np.ndarray:
        self._require_frozen()
        return self._t

    @property
    def x(self) -> np.ndarray:
        self._require_frozen()
        return self._x

    @property
    def u(self) -> np.ndarray:
        self._require_frozen()
        return self._u

    @property
    def z(self) -> np.ndarray:
        self._require_frozen()
        return self._z

    @property
    def w(self) -> np.ndarray:
        self._require_frozen()
        return self._w

    @property
    def r(self) -> np.ndarray:
        self._require_frozen()
        return self._r

    def __len__(self):
        return len(self.rows)

    def state_at(self, times) -> np.ndarray:
        """x at arbitrary times: the initial function before t0, linear interpolation after."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.size, self.n))
        before = times < self.t0
        if np.any(before):
            if self.initial is None:
                out[before] = 0.0
            else:
                out[before] = np.asarray(self.initial(times[before] - self.t0)).reshape(-1, self.n)
        after = ~before
        if np.any(after):
            for i in range(self.n):
                out[after, i] = np.interp(times[after], self.t, self.x[:, i])
        return out

    # ----- export -----
    def to_df(self) -> pd.DataFrame:
        cols = {"t": self.t}
        for label, arr in (("x", self.x), ("u", self.u), ("z", self.z), ("w", self.w)):
            for i in range(arr.shape[1]):
                cols[f"{label}{i + 1}"] = arr[:, i]
        cols["r"] = self.r
        return pd.DataFrame(cols)

    def stats(self) -> dict:
        if len(self) == 0:
            return {"steps": 0}
        norms = np.linalg.norm(self.x, axis=1)
        peak_idx = int(np.argmax(norms))
        peak = float(norms[peak_idx])
        return {
            "steps": len(self),
            "t_end": float(self.t[-1]),
            "peak_norm": peak,
            "peak_time": float(self.t[peak_idx]),
            "final_norm": float(norms[-1]),
            "decay_ratio": float(norms[-1] / peak) if peak > 0 else 0.0,
            "peak_control": float(np.max(np.abs(self.u))) if self.p else 0.0,
            "peak_output": float(np.max(np.abs(self.z))) if self.m else 0.0,
        }

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_df().to_csv(path, index=False)
        logger.info(f"Saved trajectory to {path}")
