"""
Iterative inner convex approximation of the gain-dependent dissipation
inequality

    U(H, K) = Phi_hat + Sy(P' B K_lift) < 0,    P = H H_eta,  H = [P1 P2]

which is bilinear in (H, K). Around an anchor (H~, K~) the bilinear term is
bounded by a psd-convex overestimate; the overestimate LMI

    [ Phi_hat + Sy(P~' B K + P' B K~ - P~' B K~)   (P - P~)'   (B K - B K~)' ]
    [ *                                            -Z           O            ]  < 0
    [ *                                            *            Z - I        ]

with 0 < Z < I is affine and its feasible set lies inside U < 0. Each step
solves it, moves the anchor, and stops when the relative change of (H, K)
drops under eps. An iterate whose direct re-evaluation of U is not negative
definite stops the run. The start comes from the convex synthesis gain followed by
a fixed-gain analysis.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from basis.quadrature import DEFAULT_QUAD, QuadConfig
from lmi.algebra import AffineMatExpr, blocks, const, dsum, sy, var_ref
from lmi.program import LmiProblem, SolverConfig
from models.delay_system import DelaySystem
from models.supply_rate import SupplyRate
from synthesis.certificate import Certificate
from synthesis.theorem1 import (
    LmiContext,
    add_storage_constraints,
    analyze,
    build_context,
    certificate_from,
    declare_storage,
    dissipation_lmi,
    dissipation_matrix,
    gain_lift,
)
from synthesis.theorem2 import synthesize_thm2
from utils.errors import Infeasible, InitializationFailed, IterationInfeasible, SolverError
from utils.logger import setup_logger
from utils.tensor_core import max_eig

logger = setup_logger("inner_convex", log_file="inner_convex.log")

# --------------------------
# Configuration
# --------------------------
RHO1 = 1.0
RHO2 = 1.0
EPS = 1e-3
MAX_ITERS = 50
DIRECT_CHECK_TOL = 1e-6
LEXICOGRAPHIC_SLACK = 1e-6
STRATEGIES = ("lexicographic", "proximal")
DEFAULT_STRATEGY = "lexicographic"


@dataclass
class Alg1Config:
    rho1: float = RHO1
    rho2: float = RHO2
    eps: float = EPS
    max_iters: int = MAX_ITERS
    strategy: str = DEFAULT_STRATEGY
    alphas: Optional[dict] = None

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ValueError(f"rho1 and rho2 must be positive, got {self.rho1}, {self.rho2}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")


@dataclass
class Alg1State:
    h: np.ndarray
    k: np.ndarray
    h_tilde: np.ndarray
    k_tilde: np.ndarray
    z: Optional[np.ndarray] = None
    rho1: float = RHO1
    rho2: float = RHO2
    eps: float = EPS
    iteration: int = 0
    converged: bool = False
    trace: List[dict] = field(default_factory=list)

    def record(self, gamma, change, objective, direct_max_eig, status, seconds):
        row = {
            "iteration": self.iteration,
            "gamma": gamma,
            "rel_change": change,
            "objective": objective,
            "direct_max_eig": direct_max_eig,
            "status": status,
            "seconds": seconds,
        }
        for i, val in enumerate(np.asarray(self.k).ravel(), start=1):
            row[f"k{i}"] = float(val)
        self.trace.append(row)
        logger.debug(f"Iteration {self.iteration}: {row}")

    def to_df(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace)

    def gamma_trace(self) -> List[Optional[float]]:
        return [row["gamma"] for row in self.trace]

    def save_trace(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_df().to_csv(path, index=False)
        logger.info(f"Iteration trace saved to {path}")


def relative_change(h, k, h_tilde, k_tilde) -> float:
    new = np.concatenate([np.ravel(h), np.ravel(k)])
    old = np.concatenate([np.ravel(h_tilde), np.ravel(k_tilde)])
    return float(np.max(np.abs(new - old)) / (np.max(np.abs(old)) + 1.0))


# ============================================================
# ----- OVERESTIMATE -----
# ============================================================

def input_matrix_ext(ctx: LmiContext) -> np.ndarray:
    """B = [B1_bold O_{n,m}]."""
    return np.hstack([ctx.bold.bold_b1, np.zeros((ctx.n, ctx.m))])


def gain_lift_ext(ctx: LmiContext, k) -> AffineMatExpr:
    """K_lift = lift(K) (+) O_m, mapping the extended chi onto the extended input slots."""
    return dsum(gain_lift(ctx, k), np.zeros((ctx.m, ctx.m)))


def overestimate_lmi(ctx: LmiContext, h, k, z, h_tilde, k_tilde, phi_hat) -> AffineMatExpr:
    """Affine block LMI of size (L0 + m) + 2n; equals U(H~, K~) (+) diag(-Z, Z - I) at the anchor."""
    n = ctx.n
    b = input_matrix_ext(ctx)
    bold_p = h @ ctx.h_eta_ext
    p_tilde = np.asarray(h_tilde) @ ctx.h_eta_ext
    bk = b @ gain_lift_ext(ctx, k)
    bk_tilde = b @ gain_lift_ext(ctx, k_tilde).const

    top = phi_hat + sy(p_tilde.T @ bk + bold_p.T @ bk_tilde - p_tilde.T @ bk_tilde)
    delta = bold_p - p_tilde
    gap = bk - bk_tilde
    return blocks([
        [top, delta.T, gap.T],
        [delta, -1.0 * z, None],
        [gap, None, z - np.eye(n)],
    ])


# ============================================================
# ----- ITERATION -----
# ============================================================

def _iterate_problem(ctx: LmiContext, state: Alg1State, cfg: Alg1Config, it: int):
    sys = ctx.sys
    prob = LmiProblem(f"alg1_{sys.name}_it{it}")
    s = declare_storage(prob, ctx)
    k = var_ref(prob.declare("K", sys.p, sys.n, "full"))
    z = var_ref(prob.declare("Z", sys.n))

    sigma = const(ctx.bold.bold_c) + ctx.bold.bold_b2 @ gain_lift(ctx, k)
    phi_hat = dissipation_lmi(ctx, s, ctx.bold.bold_a, sigma)
    over_lmi = overestimate_lmi(ctx, s.h, k, z, state.h_tilde, state.k_tilde, phi_hat)

    add_storage_constraints(prob, ctx, s)
    prob.add_lmi("overestimate", over_lmi, "<0")
    prob.add_lmi("Z_positive", z, ">0")
    prob.add_lmi("Z_below_identity", np.eye(sys.n) - z, ">0")

    t_h = prob.add_sum_squares("dH", s.h - state.h_tilde, cfg.rho1)
    t_k = prob.add_sum_squares("dK", k - state.k_tilde, cfg.rho2)
    regularizer = cfg.rho1 * var_ref(t_h) + cfg.rho2 * var_ref(t_k)
    if s.gamma is not None and cfg.strategy == "proximal":
        prob.add_objective(s.gamma)
    return prob, s, k, z, regularizer


def _solve_step(ctx, state, cfg, it, solver_cfg):
    prob, s, k, z, regularizer = _iterate_problem(ctx, state, cfg, it)
    outcome = prob.solve(solver_cfg)
    if outcome.feasible and s.gamma is not None and cfg.strategy == "lexicographic":
        bound = float(outcome.evaluate(regularizer)[0, 0]) + LEXICOGRAPHIC_SLACK
        prob.add_lmi("regularizer_bound", const([[bound]]) - regularizer, ">=0")
        prob.set_objective(s.gamma)
        outcome = prob.solve(solver_cfg)
    return outcome, s, k, z


def _initialize(sys, supply, cfg, solver_cfg, quad, ctx) -> Certificate:
    logger.info("----- Initialization: convex synthesis -----")
    try:
        sol = synthesize_thm2(sys, supply, cfg.alphas, solver_cfg, quad, ctx)
    except Infeasible as err:
        logger.error(f"Initialization failed: convex synthesis infeasible ({err})")
        raise InitializationFailed(f"convex synthesis infeasible with alphas {cfg.alphas}", err.outcome) from err
    logger.info(f"Initial gain K0 = {np.round(sol.k, 6).tolist()}")
    try:
        return analyze(sys, supply, sol.k, solver_cfg, quad, ctx)
    except Infeasible as err:
        logger.error(f"Initialization failed: analysis with K0 infeasible ({err})")
        raise InitializationFailed("fixed-gain analysis with the synthesized gain is infeasible", err.outcome) from err


def algorithm1(sys: DelaySystem, supply: SupplyRate, cfg: Optional[Alg1Config] = None,
               solver_cfg: Optional[SolverConfig] = None, quad: QuadConfig = DEFAULT_QUAD,
               progress: bool = True):
    """Returns (certificate of the last accepted iterate, Alg1State with the trace)."""
    cfg = cfg or Alg1Config()
    ctx = build_context(sys, supply, quad)
    logger.info(f"===== Inner Convex Iteration Started ({sys.name}, strategy={cfg.strategy}) =====")

    start = time.perf_counter()
    cert = _initialize(sys, supply, cfg, solver_cfg, quad, ctx)
    state = Alg1State(h=cert.h, k=cert.k, h_tilde=cert.h, k_tilde=cert.k,
                      rho1=cfg.rho1, rho2=cfg.rho2, eps=cfg.eps)
    state.record(cert.gamma, float("nan"), None, max_eig(dissipation_matrix(ctx, cert)),
                 cert.status, time.perf_counter() - start)

    iterator = range(1, cfg.max_iters + 1)
    for it in (tqdm(iterator, desc="Inner convex iterations") if progress else iterator):
        step_start = time.perf_counter()
        state.h_tilde, state.k_tilde = state.h, state.k
        outcome, s, k, z = _solve_step(ctx, state, cfg, it, solver_cfg)
        if outcome.status == "solver_error":
            logger.error(f"Iteration {it}: solver failure ({outcome.solver_status})")
            raise SolverError(f"iteration {it}: solver failure ({outcome.solver_status})")
        if not outcome.feasible:
            logger.error(f"Iteration {it}: overestimate LMI infeasible, keeping iterate {state.iteration}")
            raise IterationInfeasible(f"iteration {it} infeasible", last_state=state, last_certificate=cert)

        k_val = outcome.evaluate(k)
        candidate = certificate_from(outcome, s, k_val, ctx)
        u_eig = max_eig(dissipation_matrix(ctx, candidate))
        if u_eig >= DIRECT_CHECK_TOL:
            logger.error(f"Iteration {it}: direct check max eig {u_eig:.3e} >= {DIRECT_CHECK_TOL}, "
                         f"keeping iterate {state.iteration}")
            raise IterationInfeasible(f"iteration {it} fails the direct check (max eig {u_eig:.3e})",
                                      last_state=state, last_certificate=cert)
        cert = candidate

        state.h, state.k, state.z = cert.h, cert.k, outcome.evaluate(z)
        state.iteration = it
        change = relative_change(state.h, state.k, state.h_tilde, state.k_tilde)
        state.record(cert.gamma, change, outcome.objective, u_eig, outcome.status, time.perf_counter() - step_start)
        gamma_txt = "n/a" if cert.gamma is None else f"{cert.gamma:.6g}"
        logger.info(f"Iteration {it}: gamma={gamma_txt}, change={change:.3e}, K={np.round(cert.k, 4).tolist()}")
        if change < cfg.eps:
            state.converged = True
            logger.info(f"Converged after {it} iterations (change {change:.3e} < {cfg.eps})")
            break

    logger.info(f"===== Inner Convex Iteration Completed in {time.perf_counter() - start:.1f}s =====")
    return cert, state