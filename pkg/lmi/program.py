"""
LMI problems over named matrix variables and their solution through cvxpy.

An ``LmiProblem`` collects variables, matrix inequalities and a linear
objective. ``scalarize`` turns it into a ``ConicProgram``: one dense
constant and one sparse coefficient matrix per PSD block. ``solve`` hands
the blocks to cvxpy and classifies the result by re-evaluating every
block at the returned point.

Strict inequalities ``E < 0`` / ``E > 0`` are shifted semidefinite
constraints ``-E >= margin I`` / ``E >= margin I`` with
``margin = margin_rel * max(1, ||F0||_F)``.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import cvxpy as cp
import numpy as np
from scipy import sparse

from lmi.algebra import AffineMatExpr, MatVar, as_expr, blocks, var_ref
from utils.errors import DimensionError, SolverError
from utils.logger import setup_logger

logger = setup_logger("lmi_program", log_file="lmi_program.log")

# --------------------------
# Configuration
# --------------------------
SOLVER_TOL = 1e-8
STRICT_MARGIN = 1e-7
MARGINAL_FACTOR = 10.0
ASYMMETRY_TOL = 1e-12
DEFAULT_SOLVER = "CLARABEL"
FALLBACK_SOLVER = "SCS"
SOLVER_MAX_ITERS = 500

SENSES = {
    # sense -> (sign applied to the expression, strict)
    "<0": (-1.0, True),
    ">0": (1.0, True),
    "<=0": (-1.0, False),
    ">=0": (1.0, False),
}

OPTIMAL, MARGINAL, INFEASIBLE, SOLVER_FAILED = "optimal", "marginal", "infeasible", "solver_error"


@dataclass
class SolverConfig:
    name: str = DEFAULT_SOLVER
    gap_tol: float = SOLVER_TOL
    feas_tol: float = SOLVER_TOL
    margin_rel: float = STRICT_MARGIN
    max_iters: int = SOLVER_MAX_ITERS
    verbose: bool = False

    def solver_kwargs(self, name: str) -> dict:
        if name == "CLARABEL":
            return {
                "tol_gap_abs": self.gap_tol,
                "tol_gap_rel": self.gap_tol,
                "tol_feas": self.feas_tol,
                "max_iter": self.max_iters,
            }
        if name == "SCS":
            return {"eps_abs": self.feas_tol, "eps_rel": self.gap_tol, "max_iters": 100 * self.max_iters}
        return {}


# ============================================================
# ----- PROBLEM DESCRIPTION -----
# ============================================================

@dataclass(eq=False)
class LmiConstraint:
    name: str
    expr: AffineMatExpr
    sense: str


class LmiProblem:
    """Named variables, matrix inequalities and a linear objective."""

    def __init__(self, name: str = "lmi"):
        self.name = name
        self.variables: Dict[str, MatVar] = {}
        self.constraints: List[LmiConstraint] = []
        self.objective = AffineMatExpr(np.zeros((1, 1)))
        self._size = 0

    @property
    def n_decisions(self) -> int:
        return self._size

    def declare(self, name: str, rows: int, cols: Optional[int] = None, kind: str = "sym") -> MatVar:
        if name in self.variables:
            logger.error(f"[{self.name}] variable {name} declared twice")
            raise ValueError(f"variable {name!r} already declared")
        if kind == "scalar":
            rows, cols = 1, 1
        cols = rows if cols is None else cols
        var = MatVar(name, kind, int(rows), int(cols), self._size)
        self.variables[name] = var
        self._size += var.size
        return var

    def ref(self, name: str) -> AffineMatExpr:
        return var_ref(self.variables[name])

    def add_lmi(self, name: str, expr, sense: str) -> None:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}, expected one of {sorted(SENSES)}")
        expr = as_expr(expr)
        if expr.rows != expr.cols:
            logger.error(f"[{self.name}] constraint {name} is not square: {expr.shape}")
            raise DimensionError(f"constraint {name} is not square: {expr.shape}")
        if expr.rows == 0:
            logger.debug(f"[{self.name}] constraint {name} is empty, skipped")
            return
        self.constraints.append(LmiConstraint(name, expr, sense))

    def set_objective(self, expr) -> None:
        expr = as_expr(expr)
        if expr.shape != (1, 1):
            raise DimensionError(f"objective must be 1x1, got {expr.shape}")
        self.objective = expr

    def add_objective(self, expr, weight: float = 1.0) -> None:
        self.set_objective(self.objective + weight * as_expr(expr))

    def add_sum_squares(self, name: str, expr, weight: float = 1.0) -> MatVar:
        """
        Adds weight * ||expr||_F^2 to the objective through an epigraph
        scalar t with [[I, vec(expr)], [vec(expr)', t]] >= 0.
        """
        v = as_expr(expr).vec()
        t = self.declare(f"{name}_epi", 1, kind="scalar")
        t_ref = var_ref(t)
        self.add_lmi(f"{name}_epigraph", blocks([[np.eye(v.rows), v], [v.T, t_ref]]), ">=0")
        self.add_objective(t_ref, weight)
        return t

    def scalarize(self, margin_rel: float = STRICT_MARGIN) -> "ConicProgram":
        if not self.constraints:
            logger.error(f"[{self.name}] no constraints to scalarize")
            raise ValueError("an LMI problem needs at least one constraint")
        n_dec = self._size
        out = []
        for con in self.constraints:
            asym = con.expr.asymmetry()
            if asym > ASYMMETRY_TOL:
                logger.error(f"[{self.name}] constraint {con.name} asymmetric by {asym:.3e}")
                raise DimensionError(f"constraint {con.name} is not symmetric (residual {asym:.3e})")
            sym = con.expr.symmetrized()
            sign, strict = SENSES[con.sense]
            k = sym.rows
            f0 = sym.const
            margin = margin_rel * max(1.0, float(np.linalg.norm(f0))) if strict else 0.0
            cols, rows, vals = [], [], []
            for idx, coeff in sym.terms.items():
                flat = coeff.reshape(-1, order="F")
                nz = np.nonzero(flat)[0]
                rows.extend(nz.tolist())
                cols.extend([idx] * nz.size)
                vals.extend(flat[nz].tolist())
            coeffs = sparse.csc_matrix((vals, (rows, cols)), shape=(k * k, n_dec))
            out.append(ConicBlock(con.name, sign, margin, f0, coeffs))

        c = np.zeros(n_dec)
        for idx, coeff in self.objective.terms.items():
            c[idx] += float(coeff[0, 0])
        return ConicProgram(
            name=self.name,
            n_decisions=n_dec,
            objective=c,
            objective_const=float(self.objective.const[0, 0]),
            blocks=out,
            variables=dict(self.variables),
        )

    def solve(self, cfg: Optional[SolverConfig] = None) -> "SolveOutcome":
        cfg = cfg or SolverConfig()
        return self.scalarize(cfg.margin_rel).solve(cfg)


# ============================================================
# ----- SCALARIZED PROGRAM -----
# ============================================================

@dataclass(frozen=True, eq=False)
class ConicBlock:
    """sign * (F0 + sum_i x_i C_i) >= margin I, C_i stored column-stacked."""
    name: str
    sign: float
    margin: float
    f0: np.ndarray
    coeffs: sparse.csc_matrix

    @property
    def size(self) -> int:
        return self.f0.shape[0]

    @property
    def scale(self) -> float:
        return max(1.0, float(np.linalg.norm(self.f0)))

    def evaluate(self, x) -> np.ndarray:
        k = self.size
        if self.coeffs.shape[1] == 0:
            return self.f0.copy()
        lin = self.coeffs @ np.asarray(x, dtype=float)
        return self.f0 + np.asarray(lin).reshape(k, k, order="F")

    def slack(self, x) -> float:
        """Smallest eigenvalue of sign * F(x); the block holds when it is >= margin."""
        val = self.sign * self.evaluate(x)
        return float(np.linalg.eigvalsh(0.5 * (val + val.T)).min())


@dataclass(frozen=True, eq=False)
class ConicProgram:
    name: str
    n_decisions: int
    objective: np.ndarray
    objective_const: float
    blocks: List[ConicBlock]
    variables: Dict[str, MatVar]

    def residuals(self, x) -> Dict[str, float]:
        """Relative shortfall of each block against its margin (0 when satisfied)."""
        return {b.name: max(0.0, b.margin - b.slack(x)) / b.scale for b in self.blocks}

    def _cvx_problem(self):
        x = cp.Variable(self.n_decisions) if self.n_decisions else None
        cons = []
        for b in self.blocks:
            k = b.size
            if x is None or b.coeffs.nnz == 0:
                mat = cp.Constant(b.f0)
            else:
                mat = b.f0 + cp.reshape(b.coeffs @ x, (k, k), order="F")
            cons.append(b.sign * 0.5 * (mat + mat.T) >> b.margin * np.eye(k))
        if x is None or not np.any(self.objective):
            cost = cp.Minimize(0)
        else:
            cost = cp.Minimize(self.objective @ x)
        return cp.Problem(cost, cons), x

    def _run(self, problem, name: str, cfg: SolverConfig):
        if name not in cp.installed_solvers():
            logger.warning(f"[{self.name}] solver {name} not installed, using {FALLBACK_SOLVER}")
            name = FALLBACK_SOLVER
        problem.solve(solver=name, verbose=cfg.verbose, **cfg.solver_kwargs(name))
        return name

    def solve(self, cfg: Optional[SolverConfig] = None) -> "SolveOutcome":
        cfg = cfg or SolverConfig()
        problem, x = self._cvx_problem()
        sizes = [b.size for b in self.blocks]
        logger.debug(f"[{self.name}] solving: {self.n_decisions} decisions, PSD blocks {sizes}")

        start = time.perf_counter()
        used = cfg.name
        try:
            try:
                used = self._run(problem, cfg.name, cfg)
            except cp.SolverError as err:
                if cfg.name == FALLBACK_SOLVER:
                    raise
                logger.warning(f"[{self.name}] {cfg.name} failed ({err}), retrying with {FALLBACK_SOLVER}")
                used = self._run(problem, FALLBACK_SOLVER, cfg)
        except cp.SolverError as err:
            seconds = time.perf_counter() - start
            logger.error(f"[{self.name}] solver failure: {err}")
            return SolveOutcome(SOLVER_FAILED, None, {}, None, float("inf"), str(err), seconds, used)
        seconds = time.perf_counter() - start

        solver_status = problem.status
        if solver_status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE) \
                or (x is not None and x.value is None):
            logger.info(f"[{self.name}] {used}: {solver_status} in {seconds:.2f}s")
            return SolveOutcome(INFEASIBLE, None, {}, None, float("inf"), solver_status, seconds, used)

        xv = np.zeros(0) if x is None else np.asarray(x.value, dtype=float)
        residual = max(self.residuals(xv).values())
        status = self.classify(solver_status, residual, cfg.margin_rel)
        values = {name: _extract(var, xv) for name, var in self.variables.items()}
        objective = float(self.objective @ xv) + self.objective_const if xv.size else self.objective_const
        logger.info(
            f"[{self.name}] {used}: {solver_status} -> {status}, objective={objective:.6g}, "
            f"residual={residual:.2e}, {seconds:.2f}s"
        )
        return SolveOutcome(status, xv, values, objective, residual, solver_status, seconds, used)

    @staticmethod
    def classify(solver_status: str, residual: float, margin_rel: float) -> str:
        if solver_status == cp.OPTIMAL and residual <= margin_rel:
            return OPTIMAL
        if solver_status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and residual <= MARGINAL_FACTOR * margin_rel:
            return MARGINAL
        return INFEASIBLE


def _extract(var: MatVar, x):
    mat = var.unpack(x)
    return float(mat[0, 0]) if var.kind == "scalar" else mat


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    status: str
    x: Optional[np.ndarray]
    values: Dict[str, object] = field(default_factory=dict)
    objective: Optional[float] = None
    max_residual: float = float("inf")
    solver_status: str = ""
    seconds: float = 0.0
    solver: str = ""

    @property
    def feasible(self) -> bool:
        return self.status in (OPTIMAL, MARGINAL)

    @property
    def marginal(self) -> bool:
        return self.status == MARGINAL

    def value(self, name: str):
        if name not in self.values:
            raise KeyError(f"no value for variable {name!r} (status {self.status})")
        return self.values[name]

    def evaluate(self, expr: AffineMatExpr) -> np.ndarray:
        if self.x is None:
            raise SolverError(f"no solution point available (status {self.status})")
        return as_expr(expr).evaluate(self.x)


# ============================================================
# ----- SDPA EXPORT -----
# ============================================================

def write_sdpa(program: ConicProgram, path) -> None:
    """
    Sparse SDPA (.dat-s) dump: minimize c'x s.t. sum_i x_i F_i - F_0 >= 0
    with one diagonal block per constraint.
    """
    if program.n_decisions == 0:
        raise ValueError("SDPA format needs at least one decision variable")
    lines = [f'"{program.name}"', str(program.n_decisions), str(len(program.blocks))]
    lines.append(" ".join(str(b.size) for b in program.blocks))
    lines.append(" ".join(f"{v:.17g}" for v in program.objective))
    for blk_no, b in enumerate(program.blocks, start=1):
        k = b.size
        f0 = -b.sign * b.f0 + b.margin * np.eye(k)
        for i, j in zip(*np.triu_indices(k)):
            if f0[i, j] != 0.0:
                lines.append(f"0 {blk_no} {i + 1} {j + 1} {f0[i, j]:.17g}")
        coo = b.coeffs.tocoo()
        for flat, idx, val in sorted(zip(coo.row, coo.col, coo.data), key=lambda e: (e[1], e[0])):
            i, j = flat % k, flat // k
            if i <= j and val != 0.0:
                lines.append(f"{idx + 1} {blk_no} {i + 1} {j + 1} {b.sign * val:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    logger.info(f"[{program.name}] SDPA dump written to {path}")
