"""
Convex state-feedback synthesis.

With X symmetric and V = K X the closed-loop quantities become affine:

    Pi'    = [A ((I kron X) (+) I_q) + B1 ((I kron V) (+) O_q), O_{n,m}]
    Sigma' = C ((I kron X) (+) I_q) + B2 ((I kron V) (+) O_q)

and the dissipation inequality is replaced by

    Sy([I_n; Col(alpha_i I_n); O_{q+m,n}] [-X, Pi']) + [[O_n, P'], [*, Phi']] < 0

where P' = [P1' P2'] H_eta and Phi' is the dissipation block without the
storage-rate term on Pi. The scalars alpha_i (one per n-wide block of chi)
are fixed by the caller; unlisted ones are zero.
"""

from typing import Optional

import numpy as np

from basis.quadrature import DEFAULT_QUAD, QuadConfig
from lmi.algebra import blocks, dsum, hstack, kron_const, sy, var_ref
from lmi.program import LmiProblem, SolverConfig
from models.delay_system import DelaySystem
from models.supply_rate import SupplyRate
from synthesis.certificate import Thm2Solution
from synthesis.theorem1 import (
    LmiContext,
    add_storage_constraints,
    build_context,
    declare_storage,
    dissipation_lmi,
    raise_for_status,
)
from utils.errors import DimensionError, NotApplicable, SingularX
from utils.logger import setup_logger

logger = setup_logger("theorem2", log_file="theorem2.log")

# --------------------------
# Configuration
# --------------------------
X_RCOND_MIN = 1e-12


def resolve_alphas(alphas, n_blocks: int) -> np.ndarray:
    """
    Zero-filled alpha vector of length three_hat + kappa. Accepts None, a
    sequence, or a mapping from 1-based block index to value.
    """
    out = np.zeros(n_blocks)
    if alphas is None:
        return out
    if isinstance(alphas, dict):
        for idx, val in alphas.items():
            idx = int(idx)
            if not 1 <= idx <= n_blocks:
                logger.error(f"alpha index {idx} outside 1..{n_blocks}")
                raise DimensionError(f"alpha index {idx} outside 1..{n_blocks}")
            out[idx - 1] = float(val)
        return out
    vals = np.asarray(list(alphas), dtype=float)
    if vals.size > n_blocks:
        raise DimensionError(f"{vals.size} alphas given, at most {n_blocks} allowed")
    out[:vals.size] = vals
    return out


def build_thm2(ctx: LmiContext, alphas: np.ndarray):
    sys, bold = ctx.sys, ctx.bold
    n, m, q = ctx.n, ctx.m, ctx.q
    n_blocks = ctx.layout.n_blocks

    prob = LmiProblem(f"thm2_{sys.name}")
    s = declare_storage(prob, ctx)
    x = var_ref(prob.declare("X", n))
    v = var_ref(prob.declare("V", sys.p, n, "full"))

    lift_x = dsum(kron_const(np.eye(n_blocks), x), np.eye(q))
    lift_v = dsum(kron_const(np.eye(n_blocks), v), np.zeros((q, q)))
    pi_acute = bold.bold_a @ lift_x + bold.bold_b1 @ lift_v
    sigma_acute = bold.bold_c @ lift_x + bold.bold_b2 @ lift_v

    phi_acute = dissipation_lmi(ctx, s, np.zeros((n, ctx.length)), sigma_acute)
    p_acute = s.h @ ctx.h_eta_ext
    pi_ext = hstack([pi_acute, np.zeros((n, m))])

    col = np.vstack([np.eye(n), np.kron(alphas.reshape(-1, 1), np.eye(n)), np.zeros((q + m, n))])
    slack = col @ hstack([-1.0 * x, pi_ext])
    synthesis_lmi = sy(slack) + blocks([[np.zeros((n, n)), p_acute], [p_acute.T, phi_acute]])

    add_storage_constraints(prob, ctx, s)
    prob.add_lmi("synthesis_dissipation", synthesis_lmi, "<0")
    if s.gamma is not None:
        prob.set_objective(s.gamma)
    return prob, s, x, v


def synthesize_thm2(sys: DelaySystem, supply: SupplyRate, alphas=None, solver_cfg: Optional[SolverConfig] = None,
                    quad: QuadConfig = DEFAULT_QUAD, ctx: Optional[LmiContext] = None) -> Thm2Solution:
    if not sys.has_input:
        logger.error(f"{sys.name}: no control input, synthesis does not apply; use analysis instead")
        raise NotApplicable("the system has no control input; run the analysis (analyze) instead")
    ctx = ctx or build_context(sys, supply, quad)
    alpha_vec = resolve_alphas(alphas, ctx.layout.n_blocks)
    prob, s, x, v = build_thm2(ctx, alpha_vec)
    nz = {i + 1: a for i, a in enumerate(alpha_vec) if a != 0.0}
    logger.info(f"Synthesis {sys.name}: alphas {nz or 'all zero'}, {prob.n_decisions} decisions")

    outcome = prob.solve(solver_cfg)
    raise_for_status(outcome, "convex synthesis")

    x_val = outcome.evaluate(x)
    x_val = 0.5 * (x_val + x_val.T)
    v_val = outcome.evaluate(v)
    if np.linalg.matrix_rank(x_val) < sys.n or 1.0 / np.linalg.cond(x_val) < X_RCOND_MIN:
        logger.error(f"Synthesis returned a numerically singular X (cond={np.linalg.cond(x_val):.3e})")
        raise SingularX(f"X is numerically singular (cond={np.linalg.cond(x_val):.3e})")
    k = np.linalg.solve(x_val.T, v_val.T).T

    vals = s.evaluate(outcome)
    gamma = vals.pop("gamma")
    if gamma is None:
        gamma = supply.gamma
    sol = Thm2Solution(
        x=x_val, v=v_val, k=k, **vals,
        alphas=alpha_vec.tolist(), gamma=gamma, status=outcome.status, seconds=outcome.seconds,
    )
    logger.info(f"Synthesis {sys.name}: status={sol.status}, K={np.round(k, 6).tolist()}, gamma={gamma}")
    return sol
