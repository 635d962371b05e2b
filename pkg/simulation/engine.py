"""
Fixed-step simulation of the closed loop u = K x:

    x'(t) = (A1 + B1 K) x(t) + int_{-r(t)}^0 Acl(tau) x(t + tau) dtau + D1 w(t)
    z(t)  = (C1 + B4 K) x(t) + int_{-r(t)}^0 Ccl(tau) x(t + tau) dtau + D2 w(t)

The kernels are sampled once on a uniform grid over [-r2, 0]; at every step
the distributed term is a composite trapezoid over that grid with the
integrand zeroed below -r(t). It is evaluated at the start of the step and
held fixed through the four Runge-Kutta stages.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from tqdm import tqdm

from basis.expression import Expr, eval_array, eval_expr, parse_expr, pretty
from models.delay_system import DelaySystem
from models.supply_rate import SupplyRate
from simulation.history import HistoryBuffer
from simulation.trajectory import Trajectory
from utils.errors import DelayOutOfBounds, DimensionError, NonFiniteState
from utils.logger import setup_logger
from utils.tensor_core import as_mat

logger = setup_logger("engine", log_file="engine.log")

# --------------------------
# Configuration
# --------------------------
DEFAULT_DT = 1e-4
DEFAULT_KERNEL_NODES = 200
DELAY_TOL = 1e-12
DISSIPATION_REL_SLACK = 1e-3
SUPPLY_CHECK_POINTS = 200
PROGRESS_EVERY = 10000


@dataclass
class SimConfig:
    t_end: float
    t0: float = 0.0
    dt: float = DEFAULT_DT
    kernel_nodes: int = DEFAULT_KERNEL_NODES
    delay_expr: Union[str, float, Expr] = 0.0
    disturbance_exprs: Sequence = field(default_factory=list)
    history_exprs: Sequence = field(default_factory=list)
    disturbance_window: Optional[Tuple[float, float]] = None
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.kernel_nodes < 2:
            raise ValueError(f"kernel_nodes must be at least 2, got {self.kernel_nodes}")
        if not self.t_end > self.t0:
            raise ValueError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")
        if self.record_every < 1:
            raise ValueError(f"record_every must be at least 1, got {self.record_every}")
        self.delay_expr = _as_expr(self.delay_expr)
        self.disturbance_exprs = [_as_expr(e) for e in self.disturbance_exprs]
        self.history_exprs = [_as_expr(e) for e in self.history_exprs]
        if self.disturbance_window is not None:
            a, b = (float(v) for v in self.disturbance_window)
            if not a < b:
                raise ValueError(f"disturbance window [{a}, {b}) is empty")
            self.disturbance_window = (a, b)

    @property
    def steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    def describe(self) -> dict:
        return {
            "t0": self.t0,
            "t_end": self.t_end,
            "dt": self.dt,
            "kernel_nodes": self.kernel_nodes,
            "delay": pretty(self.delay_expr),
            "disturbance": [pretty(e) for e in self.disturbance_exprs],
            "history": [pretty(e) for e in self.history_exprs],
            "disturbance_window": self.disturbance_window,
        }


def _as_expr(value) -> Expr:
    return parse_expr(value) if isinstance(value, (str, int, float)) else value


# ============================================================
# ----- KERNEL QUADRATURE -----
# ============================================================

def kernel_grid(r2: float, nodes: int) -> np.ndarray:
    return np.linspace(-r2, 0.0, nodes + 1)


def trapezoid_weights(r_t: float, r2: float, nodes: int) -> np.ndarray:
    """Composite trapezoid weights on [-r2, 0], zero where tau < -r_t."""
    h = r2 / nodes
    weights = np.full(nodes + 1, h)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    taus = kernel_grid(r2, nodes)
    weights[taus < -r_t - DELAY_TOL * max(1.0, r2)] = 0.0
    return weights


def check_delay(r_t: float, r1: float, r2: float, t: float) -> None:
    tol = DELAY_TOL * max(1.0, r2)
    if not np.isfinite(r_t) or r_t < r1 - tol or r_t > r2 + tol:
        logger.error(f"Delay r({t:.6g}) = {r_t} outside [{r1}, {r2}]")
        raise DelayOutOfBounds(f"r({t:.6g}) = {r_t} outside [{r1}, {r2}]")


def _kernel_stack(kernel, taus) -> np.ndarray:
    vals = np.asarray(kernel(taus) if callable(kernel) else kernel, dtype=float)
    if vals.ndim == 1:
        vals = vals.reshape(-1, 1, 1)
    if vals.shape[0] != taus.size:
        raise DimensionError(f"kernel has {vals.shape[0]} samples, grid has {taus.size}")
    return vals


def kernel_quadrature(kernel, r_t: float, history: Callable, t: float, nodes: int,
                      r2: float, r1: float = 0.0) -> np.ndarray:
    """
    Trapezoid approximation of int_{-r_t}^0 F(tau) x(t + tau) dtau.

    Parameters
    ----------
    kernel : callable or array
        Either tau -> F(tau) stacked as (N, rows, n), or the precomputed stack
        on the grid ``linspace(-r2, 0, nodes + 1)``.
    history : callable
        Absolute times -> states, shape (N, n).
    """
    check_delay(r_t, r1, r2, t)
    taus = kernel_grid(r2, nodes)
    weights = trapezoid_weights(r_t, r2, nodes)
    active = weights > 0.0
    vals = _kernel_stack(kernel, taus)[active]
    states = np.asarray(history(t + taus[active]), dtype=float).reshape(int(active.sum()), -1)
    return np.einsum("k,krc,kc->r", weights[active], vals, states)


# ============================================================
# ----- SIMULATION -----
# ============================================================

def segment_kernels(sys: DelaySystem, coeffs: dict, prefix: str, width: int, taus: np.ndarray) -> np.ndarray:
    """Closed-loop kernel on the grid: segment 1 on [-r1, 0] when basis1 exists, segment 2 elsewhere."""
    seg1 = sys.kernel_values(coeffs[f"{prefix}_seg1"], 1, taus, width)
    seg2 = sys.kernel_values(coeffs[f"{prefix}_seg2"], 2, taus, width)
    use_seg1 = (taus >= -sys.r1 - DELAY_TOL) if not sys.basis1.is_empty else np.zeros(taus.size, dtype=bool)
    return np.where(use_seg1[:, None, None], seg1, seg2)


def initial_function(cfg: SimConfig, n: int) -> Callable:
    if len(cfg.history_exprs) != n:
        logger.error(f"history has {len(cfg.history_exprs)} expressions, the state has {n} components")
        raise DimensionError(f"history needs {n} expressions, got {len(cfg.history_exprs)}")

    def phi(thetas):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        return np.column_stack([eval_array(e, thetas) for e in cfg.history_exprs])

    return phi


def disturbance_function(cfg: SimConfig, q: int) -> Callable:
    if len(cfg.disturbance_exprs) not in (0, q):
        logger.error(f"disturbance has {len(cfg.disturbance_exprs)} expressions, expected {q}")
        raise DimensionError(f"disturbance needs {q} expressions, got {len(cfg.disturbance_exprs)}")
    exprs = cfg.disturbance_exprs
    window = cfg.disturbance_window

    def w(t: float) -> np.ndarray:
        if not exprs:
            return np.zeros(q)
        # Heaviside window taken right-continuous: active on [a, b)
        if window is not None and not window[0] <= t < window[1]:
            return np.zeros(q)
        return np.array([eval_expr(e, t) for e in exprs])

    return w


def simulate(sys: DelaySystem, k_gain=None, cfg: Optional[SimConfig] = None, progress: bool = False) -> Trajectory:
    if cfg is None:
        raise ValueError("simulate needs a SimConfig")
    n, p, m, q = sys.n, sys.p, sys.m, sys.q
    k = np.zeros((p, n)) if k_gain is None else as_mat(k_gain)
    coeffs = sys.closed_loop_coefficients(k)
    r1, r2 = sys.r1, sys.r2
    nodes, dt = cfg.kernel_nodes, cfg.dt

    taus = kernel_grid(r2, nodes)
    a_ker = segment_kernels(sys, coeffs, "a", n, taus)
    c_ker = segment_kernels(sys, coeffs, "c", n, taus)
    c_active = bool(np.any(c_ker != 0.0))
    a0, c0 = coeffs["a0"], coeffs["c0"]

    phi = initial_function(cfg, n)
    w_of = disturbance_function(cfg, q)
    buffer = HistoryBuffer(n, dt, r2, cfg.t0, phi)
    x = phi([0.0])[0]
    buffer.push(x)
    traj = Trajectory(n=n, p=p, m=m, q=q, dt=dt, t0=cfg.t0, initial=phi)

    def delay_at(t):
        r_t = eval_expr(cfg.delay_expr, t)
        check_delay(r_t, r1, r2, t)
        return r_t

    def output(t, x_t, r_t, w_t):
        dist = kernel_quadrature(c_ker, r_t, buffer.lookup, t, nodes, r2, r1) if c_active else 0.0
        return c0 @ x_t + dist + sys.d2 @ w_t

    steps = cfg.steps
    logger.info(f"===== Simulation Started ({sys.name}, {steps} steps, dt={dt}, nodes={nodes}) =====")
    logger.info(f"Gain K = {np.round(k, 6).tolist()}, delay r(t) = {pretty(cfg.delay_expr)}")
    start = time.perf_counter()

    iterator = range(steps)
    for j in (tqdm(iterator, desc="Simulating") if progress else iterator):
        t = cfg.t0 + j * dt
        r_t = delay_at(t)
        w_t = w_of(t)
        if j % cfg.record_every == 0:
            traj.append(t, x, k @ x, output(t, x, r_t, w_t), w_t, r_t)

        dist = kernel_quadrature(a_ker, r_t, buffer.lookup, t, nodes, r2, r1)
        w_mid = w_of(t + 0.5 * dt)
        w_end = w_of(t + dt)
        k1 = a0 @ x + dist + sys.d1 @ w_t
        k2 = a0 @ (x + 0.5 * dt * k1) + dist + sys.d1 @ w_mid
        k3 = a0 @ (x + 0.5 * dt * k2) + dist + sys.d1 @ w_mid
        k4 = a0 @ (x + dt * k3) + dist + sys.d1 @ w_end
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if not np.all(np.isfinite(x)):
            logger.error(f"State became non-finite at t={t + dt:.6g}")
            raise NonFiniteState(t + dt)
        buffer.push(x)
        if not progress and (j + 1) % PROGRESS_EVERY == 0:
            logger.debug(f"t={t + dt:.4f}, |x|={np.linalg.norm(x):.4e}")

    t = cfg.t0 + steps * dt
    r_t = delay_at(t)
    w_t = w_of(t)
    traj.append(t, x, k @ x, output(t, x, r_t, w_t), w_t, r_t)
    traj.freeze()

    stats = traj.stats()
    logger.info(f"Final |x| = {stats['final_norm']:.4e}, peak |x| = {stats['peak_norm']:.4e} at t={stats['peak_time']:.3f}")
    logger.info(f"===== Simulation Completed in {time.perf_counter() - start:.1f}s =====")
    return traj


# ============================================================
# ----- DISSIPATION ALONG A TRAJECTORY -----
# ============================================================

def empirical_supply_check(traj: Trajectory, supply: SupplyRate, functional_eval: Callable,
                           gamma: Optional[float] = None, stride: Optional[int] = None) -> dict:
    """
    d(t) = v(x_t) - int_{t0}^t s(z, w) on a coarse subgrid of the trajectory.
    ``functional_eval(lookup, t)`` returns v at time t given a state lookup
    over absolute times. Passes when no increment of d exceeds
    1e-3 * peak|v| + dt * peak|s|.
    """
    if gamma is None:
        gamma = supply.gamma
    s_vals = supply.value(traj.z, traj.w, gamma)
    integral = np.concatenate([[0.0], cumulative_trapezoid(s_vals, traj.t)])

    if stride is None:
        stride = max(1, len(traj) // SUPPLY_CHECK_POINTS)
    idx = np.arange(0, len(traj), stride)
    if idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)

    v = np.array([functional_eval(traj.state_at, traj.t[i]) for i in idx])
    d = v - integral[idx]
    increments = np.diff(d)
    max_increment = float(np.max(increments)) if increments.size else 0.0
    peak_v = float(np.max(np.abs(v)))
    peak_s = float(np.max(np.abs(s_vals))) if s_vals.size else 0.0
    slack = DISSIPATION_REL_SLACK * peak_v + traj.dt * peak_s
    passed = bool(max_increment <= slack)

    report = {
        "passed": passed,
        "max_increment": max_increment,
        "slack": slack,
        "peak_v": peak_v,
        "peak_supply": peak_s,
        "v_start": float(v[0]),
        "v_end": float(v[-1]),
        "supply_integral": float(integral[-1]),
        "points": int(idx.size),
        "stride": int(stride),
        "gamma": gamma,
    }
    if passed:
        logger.info(f"Dissipation along trajectory holds: max increment {max_increment:.3e} <= slack {slack:.3e}")
    else:
        logger.warning(f"Dissipation along trajectory violated: max increment {max_increment:.3e} > slack {slack:.3e}")
    return report
