"""
Dissipativity analysis for a fixed state-feedback gain.

The storage functional is

    v = eta' [P1 P2; * P3] eta
        + int_{-r1}^0 x' [Q1 + (tau + r1) R1] x + int_{-r2}^{-r1} x' [Q2 + (tau + r2) R2] x

and the conditions are three LMI groups: positivity of the functional
(``positivity_lmi``), sign conditions on Q, R and the reciprocal-convexity block
(``sign_conditions``) and the dissipation inequality (``dissipation_lmi``)

    [ Psi        Sigma' J~' ]
    [ J~ Sigma   J1         ]  < 0

with Psi = Sy(H_eta' P [Pi_x ; F_hat_n 0]) - Sy(E_w' J2' Sigma) - Xi.
The helpers here are shared with the convex synthesis and the iterative
scheme, which feed them different Pi_x / Sigma / storage variables.
"""

import time
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np
from tqdm import tqdm

from basis.kernel_basis import compute_geometry
from basis.quadrature import DEFAULT_QUAD, QuadConfig
from lmi.algebra import AffineMatExpr, as_expr, blocks, const, dsum, kron_const, sy, var_ref
from lmi.program import LmiProblem, SolverConfig, SolveOutcome
from models.bold_matrices import BoldMatrices, assemble_bold
from models.delay_system import DelaySystem
from models.supply_rate import SupplyRate
from regimes.delay_regime import ChiLayout, RegimeKind
from synthesis.certificate import Certificate
from utils.errors import AffineViolation, DimensionMismatch, Infeasible, SolverError
from utils.logger import setup_logger
from utils.tensor_core import commutation_matrix, max_eig
from utils.tensor_core import dsum as dsum_mat

logger = setup_logger("theorem1", log_file="theorem1.log")

# --------------------------
# Configuration
# --------------------------
DISSIPATION_SLACK_REL = 1e-7


# ============================================================
# ----- SHARED CONTEXT -----
# ============================================================

@dataclass(eq=False)
class LmiContext:
    """Constant matrices every builder needs, computed once per system."""
    sys: DelaySystem
    supply: SupplyRate
    bold: BoldMatrices
    layout: ChiLayout
    h_eta: np.ndarray        # (n + rho) x L0, eta = H_eta chi
    f_hat_n0: np.ndarray     # rho x L0, time derivative of the integral part of eta
    e_w: np.ndarray          # q x L0, w = E_w chi

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def m(self) -> int:
        return self.sys.m

    @property
    def q(self) -> int:
        return self.sys.q

    @property
    def rho(self) -> int:
        return self.sys.rho

    @property
    def length(self) -> int:
        return self.layout.length

    @property
    def h_eta_ext(self) -> np.ndarray:
        """H_eta padded with m zero columns for the output slot of the dissipation LMI."""
        return np.hstack([self.h_eta, np.zeros((self.h_eta.shape[0], self.m))])


def build_context(sys: DelaySystem, supply: SupplyRate, quad: QuadConfig = DEFAULT_QUAD) -> LmiContext:
    if supply.m != sys.m or supply.q != sys.q:
        logger.error(f"Supply sized (m={supply.m}, q={supply.q}) for a system with (m={sys.m}, q={sys.q})")
        raise DimensionMismatch(
            f"supply dimensions (m={supply.m}, q={supply.q}) do not match system (m={sys.m}, q={sys.q})"
        )
    geo1 = compute_geometry(sys.basis1, quad)
    geo2 = compute_geometry(sys.basis2, quad)
    bold = assemble_bold(sys, geo1, geo2)
    layout = bold.layout
    n, length = sys.n, layout.length

    h_eta = np.zeros((n + sys.rho, length))
    h_eta[:n, layout.slice("x_t")] = np.eye(n)
    xi_start = layout.offset("xi1")
    xi_width = layout.kappa * n
    h_eta[n:, xi_start:xi_start + xi_width] = bold.i_hat_n

    f_hat_n0 = np.zeros((sys.rho, length))
    f_hat_n0[:, :layout.n_blocks * n] = bold.f_hat_n

    e_w = np.zeros((sys.q, length))
    e_w[:, layout.slice("w")] = np.eye(sys.q)
    return LmiContext(sys, supply, bold, layout, h_eta, f_hat_n0, e_w)


# ============================================================
# ----- STORAGE VARIABLES -----
# ============================================================

@dataclass(eq=False)
class StorageVars:
    p1: AffineMatExpr
    p2: AffineMatExpr
    p3: AffineMatExpr
    q1: AffineMatExpr
    q2: AffineMatExpr
    r1m: AffineMatExpr
    r2m: AffineMatExpr
    y: AffineMatExpr
    gamma: Optional[AffineMatExpr] = None

    @property
    def h(self) -> AffineMatExpr:
        return blocks([[self.p1, self.p2]])

    @property
    def p_matrix(self) -> AffineMatExpr:
        return blocks([[self.p1, self.p2], [self.p2.T, self.p3]])

    @property
    def r2_y(self) -> AffineMatExpr:
        return blocks([[self.r2m, self.y], [self.y.T, self.r2m]])

    @classmethod
    def from_certificate(cls, cert: Certificate) -> "StorageVars":
        gamma = None if cert.gamma is None else const([[cert.gamma]])
        return cls(*(const(getattr(cert, name)) for name in
                     ("p1", "p2", "p3", "q1", "q2", "r1m", "r2m", "y")), gamma=gamma)

    def evaluate(self, outcome: SolveOutcome) -> dict:
        out = {name: outcome.evaluate(getattr(self, name))
               for name in ("p1", "p2", "p3", "q1", "q2", "r1m", "r2m", "y")}
        out["gamma"] = None if self.gamma is None else float(outcome.evaluate(self.gamma)[0, 0])
        return out


def declare_storage(prob: LmiProblem, ctx: LmiContext, prefix: str = "") -> StorageVars:
    """
    P1, P2, P3, Q1, Q2, R1, R2, Y (plus gamma in gamma mode). In the point
    regime Q2 = R2 = Y = 0, in the lower-zero regime Q1 = R1 = 0.
    """
    n, rho = ctx.n, ctx.rho
    kind = ctx.layout.regime.kind

    def var(name, rows, cols=None, k="sym"):
        return var_ref(prob.declare(f"{prefix}{name}", rows, cols, k))

    zero = const(np.zeros((n, n)))
    p1 = var("P1", n)
    p2 = var("P2", n, rho, "full")
    p3 = var("P3", rho)
    if kind == RegimeKind.LOWER_ZERO:
        q1 = r1m = zero
    else:
        q1, r1m = var("Q1", n), var("R1", n)
    if kind == RegimeKind.POINT:
        q2 = r2m = y = zero
    else:
        q2, r2m, y = var("Q2", n), var("R2", n), var("Y", n, n, "full")

    gamma = None
    if ctx.supply.gamma_mode:
        gamma = var_ref(prob.declare("gamma", 1, kind="scalar"))
        prob.add_lmi("gamma_positive", gamma, ">0")
    return StorageVars(p1, p2, p3, q1, q2, r1m, r2m, y, gamma)


# ============================================================
# ----- LMI BUILDERS -----
# ============================================================

def supply_blocks(ctx: LmiContext, s: StorageVars):
    """(J1, J3) as expressions; affine in gamma in gamma mode."""
    sup = ctx.supply
    if sup.gamma_mode:
        return kron_const(-np.eye(ctx.m), s.gamma), kron_const(np.eye(ctx.q), s.gamma)
    return const(sup.j1), const(sup.j3)


def gain_lift(ctx: LmiContext, k) -> AffineMatExpr:
    """(I_{three_hat + kappa} kron K) (+) O_q for a numeric or variable K."""
    return dsum(kron_const(np.eye(ctx.layout.n_blocks), k), np.zeros((ctx.q, ctx.q)))


def closed_loop(ctx: LmiContext, k):
    """Pi_x = A + B1 lift(K), Sigma = C + B2 lift(K)."""
    lift = gain_lift(ctx, k)
    bold = ctx.bold
    return const(bold.bold_a) + bold.bold_b1 @ lift, const(bold.bold_c) + bold.bold_b2 @ lift


def xi_matrix(ctx: LmiContext, s: StorageVars, j3: AffineMatExpr) -> AffineMatExpr:
    """Xi built on the logical slots and folded onto chi."""
    sys, lay = ctx.sys, ctx.layout
    n, k1, k2 = ctx.n, lay.kappa1, lay.kappa2
    x_r1 = s.q1 - s.q2 - sys.r3 * s.r2m
    x_r2 = s.q2
    x_t = -1.0 * s.q1 - sys.r1 * s.r1m
    xi1 = kron_const(np.eye(k1), s.r1m)
    if k2:
        comm = dsum_mat(commutation_matrix(k2, n), commutation_matrix(k2, n))
        xi23 = comm @ kron_const(s.r2_y, np.eye(k2)) @ comm.T
    else:
        xi23 = const(np.zeros((0, 0)))
    logical = dsum(x_r1, x_r2, x_t, xi1, xi23, j3)
    fold = lay.fold()
    return fold.T @ logical @ fold


def positivity_lmi(ctx: LmiContext, s: StorageVars) -> AffineMatExpr:
    d1, d2 = ctx.sys.basis1.d, ctx.sys.basis2.d
    return s.p_matrix + dsum(np.zeros((ctx.n, ctx.n)), kron_const(np.eye(d1), s.q1), kron_const(np.eye(d2), s.q2))


def sign_conditions(ctx: LmiContext, s: StorageVars) -> List[tuple]:
    """(name, expression) pairs constrained >= 0; constant (zeroed) blocks are dropped."""
    groups = [("Q1_psd", s.q1), ("Q2_psd", s.q2), ("R1_psd", s.r1m), ("R2_Y_psd", s.r2_y)]
    return [(name, expr) for name, expr in groups if not expr.is_constant]


def psi_matrix(ctx: LmiContext, s: StorageVars, pi_x, sigma, j3) -> AffineMatExpr:
    sup = ctx.supply
    m_d = blocks([[as_expr(pi_x)], [ctx.f_hat_n0]])
    try:
        storage_rate = sy(ctx.h_eta.T @ s.p_matrix @ m_d)
    except AffineViolation:
        logger.error("Storage rate is bilinear: P and the closed-loop matrix both carry variables")
        raise
    cross = sy(ctx.e_w.T @ sup.j2.T @ as_expr(sigma))
    return storage_rate - cross - xi_matrix(ctx, s, j3)


def dissipation_lmi(ctx: LmiContext, s: StorageVars, pi_x, sigma) -> AffineMatExpr:
    """Dissipation inequality, (L0 + m) square."""
    j1, j3 = supply_blocks(ctx, s)
    sigma = as_expr(sigma)
    jt = ctx.supply.j_tilde
    psi = psi_matrix(ctx, s, pi_x, sigma, j3)
    return blocks([[psi, sigma.T @ jt.T], [jt @ sigma, j1]])


def add_storage_constraints(prob: LmiProblem, ctx: LmiContext, s: StorageVars, prefix: str = "") -> None:
    prob.add_lmi(f"{prefix}positivity", positivity_lmi(ctx, s), ">0")
    for name, expr in sign_conditions(ctx, s):
        prob.add_lmi(f"{prefix}{name}", expr, ">=0")


# ============================================================
# ----- ANALYSIS -----
# ============================================================

def build_thm1(ctx: LmiContext, k_gain=None, k_mode: str = "fixed"):
    """
    Analysis problem for u = K x. ``k_mode="variable"`` declares K as a
    decision and is rejected: the storage rate becomes bilinear.
    """
    sys = ctx.sys
    prob = LmiProblem(f"thm1_{sys.name}")
    s = declare_storage(prob, ctx)
    if k_mode == "variable":
        k = var_ref(prob.declare("K", sys.p, sys.n, "full"))
    elif k_mode == "fixed":
        k = np.zeros((sys.p, sys.n)) if k_gain is None else np.asarray(k_gain, dtype=float).reshape(sys.p, sys.n)
    else:
        raise ValueError(f"unknown k_mode {k_mode!r}")
    pi_x, sigma = closed_loop(ctx, k)
    add_storage_constraints(prob, ctx, s)
    prob.add_lmi("dissipation", dissipation_lmi(ctx, s, pi_x, sigma), "<0")
    if s.gamma is not None:
        prob.set_objective(s.gamma)
    return prob, s


def dissipation_matrix(ctx: LmiContext, cert: Certificate) -> np.ndarray:
    """Numeric left-hand side of the dissipation LMI at a certificate (U(H, K))."""
    s = StorageVars.from_certificate(cert)
    pi_x, sigma = closed_loop(ctx, cert.k)
    return dissipation_lmi(ctx, s, pi_x, sigma).const


def certificate_from(outcome: SolveOutcome, s: StorageVars, k, ctx: LmiContext) -> Certificate:
    vals = s.evaluate(outcome)
    gamma = vals.pop("gamma")
    if gamma is None and ctx.supply.gamma is not None:
        gamma = ctx.supply.gamma
    return Certificate(
        **vals,
        k=np.asarray(k, dtype=float).reshape(ctx.sys.p, ctx.sys.n),
        gamma=gamma,
        status=outcome.status,
        r1=ctx.sys.r1,
        r2=ctx.sys.r2,
        supply=ctx.supply.describe(),
        seconds=outcome.seconds,
    )


def post_check(ctx: LmiContext, cert: Certificate) -> dict:
    """Eigenvalue slacks of all three condition groups at the returned certificate."""
    report = cert.verify(ctx.sys)
    u = dissipation_matrix(ctx, cert)
    scale = max(1.0, float(np.linalg.norm(u)))
    worst = max_eig(u)
    report["checks"]["dissipation"] = {"max_eig": worst, "passed": bool(worst <= DISSIPATION_SLACK_REL * scale)}
    report["passed"] = all(c["passed"] for c in report["checks"].values())
    return report


def raise_for_status(outcome: SolveOutcome, what: str) -> None:
    if outcome.status == "solver_error":
        logger.error(f"{what}: solver failure ({outcome.solver_status})")
        raise SolverError(f"{what}: solver failure ({outcome.solver_status})")
    if not outcome.feasible:
        logger.error(f"{what}: infeasible (solver status {outcome.solver_status})")
        raise Infeasible(f"{what} is infeasible", outcome)


def analyze(sys: DelaySystem, supply: SupplyRate, k_gain=None, solver_cfg: Optional[SolverConfig] = None,
            quad: QuadConfig = DEFAULT_QUAD, ctx: Optional[LmiContext] = None) -> Certificate:
    """Feasibility (fixed supply) or min-gamma (gamma mode) analysis with u = K x."""
    ctx = ctx or build_context(sys, supply, quad)
    k = np.zeros((sys.p, sys.n)) if k_gain is None else np.asarray(k_gain, dtype=float).reshape(sys.p, sys.n)
    prob, s = build_thm1(ctx, k)
    logger.info(
        f"Analysis {sys.name}: [r1, r2] = [{sys.r1}, {sys.r2}], regime={sys.regime.kind.value}, "
        f"dissipation block {ctx.length + ctx.m}, {prob.n_decisions} decisions"
    )
    outcome = prob.solve(solver_cfg)
    raise_for_status(outcome, f"analysis on [{sys.r1}, {sys.r2}]")

    cert = certificate_from(outcome, s, k, ctx)
    cert.checks = post_check(ctx, cert)
    if cert.marginal:
        logger.warning(f"Analysis on [{sys.r1}, {sys.r2}] is marginal (residual {outcome.max_residual:.2e})")
    if not cert.checks["passed"]:
        logger.warning(f"Post-solve checks failed on [{sys.r1}, {sys.r2}]: {cert.checks['checks']}")
    gamma_txt = "n/a" if cert.gamma is None else f"{cert.gamma:.6g}"
    logger.info(f"Analysis {sys.name}: status={cert.status}, gamma={gamma_txt}, {outcome.seconds:.2f}s")
    return cert


def analyze_sweep(sys: DelaySystem, supply: SupplyRate, intervals: Iterable, k_gain=None,
                  solver_cfg: Optional[SolverConfig] = None, quad: QuadConfig = DEFAULT_QUAD) -> List[dict]:
    """One row per (r1, r2) interval, in input order; infeasible intervals are reported, not raised."""
    rows = []
    for r1, r2 in tqdm(list(intervals), desc="Delay interval sweep"):
        start = time.perf_counter()
        row = {"r1": float(r1), "r2": float(r2), "r3": float(r2) - float(r1)}
        try:
            cert = analyze(sys.with_delays(r1, r2), supply, k_gain, solver_cfg, quad)
            row.update({"status": cert.status, "gamma": cert.gamma})
        except Infeasible:
            row.update({"status": "infeasible", "gamma": None})
        row["seconds"] = time.perf_counter() - start
        rows.append(row)
    return rows
