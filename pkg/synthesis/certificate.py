"""
Solver outputs: the storage-functional certificate of the analysis
conditions and the convex-synthesis solution it can be recovered from.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from models.delay_system import DelaySystem
from utils.logger import setup_logger
from utils.tensor_core import as_mat, dsum, kron, min_eig

logger = setup_logger("certificate", log_file="certificate.log")

# --------------------------
# Configuration
# --------------------------
CERT_SLACK_REL = 1e-7

MATRIX_FIELDS = ("p1", "p2", "p3", "q1", "q2", "r1m", "r2m", "y", "k")


def _scale(mat) -> float:
    return max(1.0, float(np.linalg.norm(mat))) if mat.size else 1.0


@dataclass(eq=False)
class Certificate:
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    r1m: np.ndarray
    r2m: np.ndarray
    y: np.ndarray
    k: np.ndarray
    gamma: Optional[float] = None
    status: str = "optimal"
    r1: Optional[float] = None
    r2: Optional[float] = None
    supply: dict = field(default_factory=dict)
    seconds: float = 0.0
    checks: dict = field(default_factory=dict)

    @property
    def marginal(self) -> bool:
        return self.status == "marginal"

    @property
    def h(self) -> np.ndarray:
        """H = [P1 P2]."""
        return np.hstack([self.p1, self.p2])

    @property
    def p_matrix(self) -> np.ndarray:
        return np.block([[self.p1, self.p2], [self.p2.T, self.p3]])

    def positivity_matrix(self, d1: int, d2: int) -> np.ndarray:
        """[P1 P2; * P3] + (O_n (+) I_d1 kron Q1 (+) I_d2 kron Q2)."""
        n = self.p1.shape[0]
        return self.p_matrix + dsum(np.zeros((n, n)), kron(np.eye(d1), self.q1), kron(np.eye(d2), self.q2))

    def verify(self, sys: DelaySystem) -> dict:
        """Eigenvalue slacks of the positivity and sign conditions on the certificate."""
        d1, d2 = sys.basis1.d, sys.basis2.d
        pos = self.positivity_matrix(d1, d2)
        y_block = np.block([[self.r2m, self.y], [self.y.T, self.r2m]])
        checks = {
            "positivity": (min_eig(pos), _scale(pos)),
            "q1_psd": (min_eig(self.q1), _scale(self.q1)),
            "q2_psd": (min_eig(self.q2), _scale(self.q2)),
            "r1_psd": (min_eig(self.r1m), _scale(self.r1m)),
            "r2_y_psd": (min_eig(y_block), _scale(y_block)),
        }
        report = {"checks": {}}
        for name, (eig, scale) in checks.items():
            report["checks"][name] = {"min_eig": eig, "passed": bool(eig >= -CERT_SLACK_REL * scale)}
        report["passed"] = all(c["passed"] for c in report["checks"].values())
        if not report["passed"]:
            failed = [k for k, c in report["checks"].items() if not c["passed"]]
            logger.warning(f"Certificate verification failed: {failed}")
        return report

    # ----- persistence -----
    def to_dict(self) -> dict:
        out = {name: np.asarray(getattr(self, name)).tolist() for name in MATRIX_FIELDS}
        out.update({
            "gamma": self.gamma,
            "status": self.status,
            "r1": self.r1,
            "r2": self.r2,
            "supply": self.supply,
            "seconds": self.seconds,
            "checks": self.checks,
        })
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        mats = {}
        for name in MATRIX_FIELDS:
            arr = np.asarray(data[name], dtype=float)
            mats[name] = arr if arr.ndim == 2 else as_mat(arr)
        return cls(
            **mats,
            gamma=data.get("gamma"),
            status=data.get("status", "optimal"),
            r1=data.get("r1"),
            r2=data.get("r2"),
            supply=data.get("supply", {}),
            seconds=data.get("seconds", 0.0),
            checks=data.get("checks", {}),
        )

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"certificate": self.to_dict()}, fh, indent=2)
        logger.info(f"Certificate saved to {path}")

    @classmethod
    def load_json(cls, path) -> "Certificate":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data.get("certificate", data))


@dataclass(eq=False)
class Thm2Solution:
    """Convex synthesis variables; K = V X^-1 and the acute blocks are the congruence images."""
    x: np.ndarray
    v: np.ndarray
    k: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    r1m: np.ndarray
    r2m: np.ndarray
    y: np.ndarray
    alphas: List[float]
    gamma: Optional[float] = None
    status: str = "optimal"
    seconds: float = 0.0

    @property
    def marginal(self) -> bool:
        return self.status == "marginal"

    def gain_residual(self) -> float:
        """||K X - V|| relative to max(1, ||V||)."""
        return float(np.linalg.norm(self.k @ self.x - self.v)) / max(1.0, float(np.linalg.norm(self.v)))

    def to_certificate(self, sys: DelaySystem) -> Certificate:
        """Undo the congruence with X^-1 to get storage blocks for the recovered gain."""
        t = np.linalg.inv(self.x)
        t = 0.5 * (t + t.T)
        d = sys.basis1.d + sys.basis2.d
        td = kron(np.eye(d), t)
        return Certificate(
            p1=t @ self.p1 @ t,
            p2=t @ self.p2 @ td,
            p3=td @ self.p3 @ td,
            q1=t @ self.q1 @ t,
            q2=t @ self.q2 @ t,
            r1m=t @ self.r1m @ t,
            r2m=t @ self.r2m @ t,
            y=t @ self.y @ t,
            k=self.k,
            gamma=self.gamma,
            status=self.status,
            r1=sys.r1,
            r2=sys.r2,
            seconds=self.seconds,
        )

    def to_dict(self) -> dict:
        out = {name: np.asarray(getattr(self, name)).tolist() for name in ("x", "v", *MATRIX_FIELDS)}
        out.update({"alphas": list(self.alphas), "gamma": self.gamma, "status": self.status, "seconds": self.seconds})
        return out

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"thm2_solution": self.to_dict()}, fh, indent=2)
        logger.info(f"Synthesis solution saved to {path}")
