"""
Spectral abscissa of the closed loop with a constant delay r(t) = r_hat.

The infinitesimal generator of the delay equation is collocated on the
Chebyshev points theta_0 = 0 > theta_1 > ... > theta_N = -r_hat: rows 1..N
carry the differentiation matrix, row 0 carries the right-hand side

    A0 u(0) + int_{-r_hat}^0 A(tau) u(tau) dtau + sum_j Aj u(-h_j)

with the integral done by Clenshaw-Curtis on each kernel piece through the
interpolating polynomial. N is doubled until the abscissa settles.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import eigvals
from tqdm import tqdm

from models.delay_system import DelaySystem
from utils.errors import DimensionError, NonConvergent
from utils.logger import setup_logger
from utils.tensor_core import as_mat

logger = setup_logger("spectrum", log_file="spectrum.log")

# --------------------------
# Configuration
# --------------------------
N_START = 16
N_MAX = 512
ABSCISSA_TOL = 1e-6
LEADING = 6


@dataclass
class SpectrumResult:
    abscissa: float
    leading: List[complex]
    n_points: int
    r_const: float
    history: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return self.abscissa < 0.0

    def to_dict(self) -> dict:
        return {
            "r_const": self.r_const,
            "abscissa": self.abscissa,
            "stable": self.stable,
            "N": self.n_points,
            "leading": [[float(z.real), float(z.imag)] for z in self.leading],
            "refinements": [{"N": n, "abscissa": a} for n, a in self.history],
        }


# ============================================================
# ----- CHEBYSHEV TOOLS -----
# ============================================================

def cheb_diff(n_pts: int):
    """Chebyshev points x_j = cos(j pi / N) (descending) and the differentiation matrix."""
    j = np.arange(n_pts + 1)
    x = np.cos(np.pi * j / n_pts)
    c = np.hstack([2.0, np.ones(n_pts - 1), 2.0]) * (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n_pts + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


def clenshaw_curtis(n_pts: int):
    """Clenshaw-Curtis nodes (descending, on [-1, 1]) and weights."""
    theta = np.pi * np.arange(n_pts + 1) / n_pts
    x = np.cos(theta)
    w = np.zeros(n_pts + 1)
    inner = np.arange(1, n_pts)
    v = np.ones(n_pts - 1)
    if n_pts % 2 == 0:
        w[0] = w[-1] = 1.0 / (n_pts ** 2 - 1)
        for k in range(1, n_pts // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n_pts * theta[inner]) / (n_pts ** 2 - 1)
    else:
        w[0] = w[-1] = 1.0 / n_pts ** 2
        for k in range(1, (n_pts - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / n_pts
    return x, w


def interpolation_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Row i maps nodal values to the interpolant at points[i]. Barycentric
    form with the closed-form Chebyshev weights (-1)^j, halved at both ends.
    """
    n_pts = nodes.size - 1
    bw = (-1.0) ** np.arange(n_pts + 1)
    bw[0] *= 0.5
    bw[-1] *= 0.5
    diff = points[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-14)
    diff[exact] = 1.0
    terms = bw[None, :] / diff
    mat = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    mat[hit] = exact[hit].astype(float)
    return mat


# ============================================================
# ----- GENERATOR -----
# ============================================================

def kernel_pieces(sys: DelaySystem, k_gain, r_const: float) -> List[Tuple[float, float, Callable]]:
    """Closed-loop kernel pieces on [-r_hat, 0], split at -min(r1, r_hat)."""
    coeffs = sys.closed_loop_coefficients(k_gain)
    n = sys.n
    split = min(sys.r1, r_const)
    pieces = []
    if not sys.basis1.is_empty and split > 0.0:
        pieces.append((-split, 0.0, lambda taus: sys.kernel_values(coeffs["a_seg1"], 1, taus, n)))
    if not sys.basis2.is_empty and r_const > split:
        pieces.append((-r_const, -split, lambda taus: sys.kernel_values(coeffs["a_seg2"], 2, taus, n)))
    return pieces


def generator_matrix(a0, r_const: float, n_pts: int, pieces: Sequence = (),
                     discrete: Sequence = ()) -> np.ndarray:
    """
    Collocated generator of size (N+1) n.

    Parameters
    ----------
    pieces : sequence of (a, b, kernel)
        ``kernel(taus)`` returns the (len(taus), n, n) stack of the kernel on [a, b].
    discrete : sequence of (Aj, h_j)
        Point-delay terms Aj x(t - h_j) with 0 <= h_j <= r_const.
    """
    a0 = as_mat(a0)
    n = a0.shape[0]
    x, d = cheb_diff(n_pts)
    nodes = 0.5 * r_const * (x - 1.0)
    d_theta = (2.0 / r_const) * d

    row0 = np.zeros((n, (n_pts + 1) * n))
    row0[:, :n] += a0
    cc_x, cc_w = clenshaw_curtis(n_pts)
    for a, b, kernel in pieces:
        if b <= a:
            continue
        taus = 0.5 * (b - a) * cc_x + 0.5 * (a + b)
        weights = 0.5 * (b - a) * cc_w
        interp = interpolation_matrix(nodes, taus)                # (M, N+1)
        vals = np.asarray(kernel(taus), dtype=float)              # (M, n, n)
        row0 += np.einsum("l,lj,lrc->rjc", weights, interp, vals).reshape(n, -1)
    for a_j, h_j in discrete:
        a_j = as_mat(a_j)
        if not 0.0 <= h_j <= r_const:
            raise DimensionError(f"point delay {h_j} outside [0, {r_const}]")
        interp = interpolation_matrix(nodes, np.array([-float(h_j)]))[0]
        row0 += np.kron(interp[None, :], a_j)

    gen = np.zeros(((n_pts + 1) * n, (n_pts + 1) * n))
    gen[:n] = row0
    gen[n:] = np.kron(d_theta[1:], np.eye(n))
    return gen


def abscissa_of(gen: np.ndarray) -> Tuple[float, np.ndarray]:
    eig = eigvals(gen)
    eig = eig[np.isfinite(eig)]
    order = np.argsort(-eig.real)
    return float(eig.real[order[0]]), eig[order]


def generator_abscissa(a0, r_const: float, pieces: Sequence = (), discrete: Sequence = (),
                       n_start: int = N_START, n_max: int = N_MAX, tol: float = ABSCISSA_TOL) -> SpectrumResult:
    """Double N from n_start until consecutive abscissas agree within tol."""
    if not r_const > 0.0:
        raise ValueError(f"constant delay must be positive, got {r_const}")
    n_pts = n_start
    prev, _ = abscissa_of(generator_matrix(a0, r_const, n_pts, pieces, discrete))
    history = [(n_pts, prev)]
    while n_pts * 2 <= n_max:
        n_pts *= 2
        cur, eig = abscissa_of(generator_matrix(a0, r_const, n_pts, pieces, discrete))
        history.append((n_pts, cur))
        logger.debug(f"r={r_const}: N={n_pts}, abscissa={cur:.10f}")
        if abs(cur - prev) <= tol:
            return SpectrumResult(cur, [complex(z) for z in eig[:LEADING]], n_pts, float(r_const), history)
        prev = cur
    logger.error(f"Spectral abscissa at r={r_const} did not settle up to N={n_max}: {history[-2:]}")
    raise NonConvergent(f"spectral abscissa at r={r_const} not converged by N={n_max}")


def spectral_abscissa(sys: DelaySystem, k_gain=None, r_const: Optional[float] = None,
                      n_start: int = N_START, discrete: Sequence = ()) -> SpectrumResult:
    if r_const is None:
        r_const = 0.5 * (sys.r1 + sys.r2)
    if not sys.r1 <= r_const <= sys.r2:
        logger.warning(f"r_hat={r_const} outside [{sys.r1}, {sys.r2}]; kernels evaluated beyond their design interval")
    coeffs = sys.closed_loop_coefficients(k_gain)
    result = generator_abscissa(coeffs["a0"], float(r_const), kernel_pieces(sys, k_gain, r_const), discrete, n_start)
    logger.info(f"Spectral abscissa {sys.name} at r={r_const}: {result.abscissa:.6g} (N={result.n_points})")
    return result


def scan_window(sys: DelaySystem, k_gain, grid: Sequence[float], progress: bool = True) -> dict:
    """Abscissa over a grid of constant delays and the longest contiguous stable run."""
    rows = []
    for r in (tqdm(grid, desc="Spectral scan") if progress else grid):
        try:
            res = spectral_abscissa(sys, k_gain, float(r))
            rows.append({"r": float(r), "abscissa": res.abscissa, "N": res.n_points, "status": "ok"})
        except NonConvergent:
            rows.append({"r": float(r), "abscissa": np.nan, "N": N_MAX, "status": "nonconvergent"})
    df = pd.DataFrame(rows)

    best, run = None, None
    for row in rows:
        if row["status"] == "ok" and row["abscissa"] < 0.0:
            run = (run[0], row["r"]) if run else (row["r"], row["r"])
            if best is None or run[1] - run[0] > best[1] - best[0]:
                best = run
        else:
            run = None
    window = list(best) if best else None
    logger.info(f"Stable window on the scanned grid: {window}")
    return {"window": window, "table": df}
