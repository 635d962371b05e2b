"""
YAML problem files.

    name: controlled
    system:   n, m, p, q, r1, r2, A1, B1, D1, C1, B4, D2
    basis:    f1, phi1, M1, f2, phi2, M2          (expression lists / arrays)
    kernels:  A2, A3, B2, B3, C2, C3, B5, B6       (coefficients; omitted -> zero)
              raw: {a2: [[expr, ...], ...], ...}   (optional, checked by validate)
    supply:   type: l2gain | passivity | custom, gamma / J1 / Jt / J2 / J3
    sim:      t0, t_end, dt, kernel_nodes, delay, disturbance, history, disturbance_window
    solver:   name, tol, margin, max_iters, quad_order, quad_panels
    alg1:     alphas, rho1, rho2, eps, max_iters, strategy

Every error names the offending ``section.key``.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from basis.kernel_basis import KernelBasis
from basis.quadrature import QUAD_ORDER, QUAD_PANELS, QuadConfig
from lmi.program import DEFAULT_SOLVER, SOLVER_MAX_ITERS, SOLVER_TOL, STRICT_MARGIN, SolverConfig
from models.delay_system import DelaySystem
from models.supply_rate import SupplyRate, supply_custom, supply_l2, supply_passivity
from simulation.engine import DEFAULT_DT, DEFAULT_KERNEL_NODES, SimConfig
from synthesis.inner_convex import DEFAULT_STRATEGY, EPS, MAX_ITERS, RHO1, RHO2, Alg1Config
from utils.errors import DdssError, ProblemFileError
from utils.logger import setup_logger

logger = setup_logger("problem_loader", log_file="problem_loader.log")

# --------------------------
# Configuration
# --------------------------
PROBLEM_DIR = Path("data/problems")
SECTIONS = ("name", "system", "basis", "kernels", "supply", "sim", "solver", "alg1")

# coefficient key -> (DelaySystem field, rows, column width, segment)
COEFFICIENTS = {
    "A2": ("a2", "n", "n", 1),
    "A3": ("a3", "n", "n", 2),
    "B2": ("b2k", "n", "p", 1),
    "B3": ("b3k", "n", "p", 2),
    "C2": ("c2", "m", "n", 1),
    "C3": ("c3", "m", "n", 2),
    "B5": ("b5k", "m", "p", 1),
    "B6": ("b6k", "m", "p", 2),
}


@dataclass(eq=False)
class Problem:
    name: str
    system: DelaySystem
    supply: SupplyRate
    solver: SolverConfig
    quad: QuadConfig
    alg1: Alg1Config
    sim: Optional[SimConfig] = None
    source: Optional[Path] = None

    def with_delays(self, r1: Optional[float] = None, r2: Optional[float] = None) -> "Problem":
        r1 = self.system.r1 if r1 is None else float(r1)
        r2 = self.system.r2 if r2 is None else float(r2)
        return replace(self, system=self.system.with_delays(r1, r2))


# ============================================================
# ----- FIELD HELPERS -----
# ============================================================

def _section(doc: dict, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ProblemFileError(name, "missing section")
        return {}
    if not isinstance(sec, dict):
        raise ProblemFileError(name, f"expected a mapping, got {type(sec).__name__}")
    return sec


def _number(sec: dict, path: str, key: str, default=None, kind=float):
    if key not in sec or sec[key] is None:
        if default is None:
            raise ProblemFileError(f"{path}.{key}", "missing value")
        return default
    try:
        return kind(sec[key])
    except (TypeError, ValueError):
        raise ProblemFileError(f"{path}.{key}", f"expected a number, got {sec[key]!r}")


def _matrix(sec: dict, path: str, key: str, shape, required: bool = True) -> np.ndarray:
    rows, cols = shape
    if key not in sec or sec[key] is None:
        if required and rows * cols > 0:
            raise ProblemFileError(f"{path}.{key}", f"missing matrix of shape {shape}")
        return np.zeros(shape)
    try:
        mat = np.asarray(sec[key], dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{path}.{key}", "matrix entries must be numbers")
    if mat.size == 0 and rows * cols == 0:
        return np.zeros(shape)
    if mat.ndim == 1 and cols == 1:
        mat = mat.reshape(-1, 1)
    if mat.ndim != 2 or mat.shape != (rows, cols):
        raise ProblemFileError(f"{path}.{key}", f"shape {mat.shape} does not match expected {shape}")
    return mat


def _expr_list(sec: dict, path: str, key: str) -> list:
    vals = sec.get(key) or []
    if not isinstance(vals, list):
        raise ProblemFileError(f"{path}.{key}", "expected a list of expressions")
    return [str(v) if not isinstance(v, (int, float)) else v for v in vals]


# ============================================================
# ----- SECTIONS -----
# ============================================================

def _basis(sec: dict, idx: int, interval) -> KernelBasis:
    f = _expr_list(sec, "basis", f"f{idx}")
    phi = _expr_list(sec, "basis", f"phi{idx}")
    if not f and not phi:
        return KernelBasis.empty_basis(interval)
    m_mat = _matrix(sec, "basis", f"M{idx}", (len(f), len(phi) + len(f)), required=bool(f))
    try:
        return KernelBasis.from_sources(f, phi, m_mat, interval)
    except DdssError as err:
        raise ProblemFileError(f"basis.f{idx}", str(err)) from err


def _system(doc: dict, name: str) -> DelaySystem:
    sec = _section(doc, "system")
    dims = {k: _number(sec, "system", k, kind=int) for k in ("n", "m", "q")}
    dims["p"] = _number(sec, "system", "p", default=0, kind=int)
    r1 = _number(sec, "system", "r1")
    r2 = _number(sec, "system", "r2")
    n, m, p, q = dims["n"], dims["m"], dims["p"], dims["q"]

    mats = {
        "a1": _matrix(sec, "system", "A1", (n, n)),
        "b1": _matrix(sec, "system", "B1", (n, p), required=False),
        "d1": _matrix(sec, "system", "D1", (n, q)),
        "c1": _matrix(sec, "system", "C1", (m, n)),
        "b4": _matrix(sec, "system", "B4", (m, p), required=False),
        "d2": _matrix(sec, "system", "D2", (m, q)),
    }

    bsec = _section(doc, "basis")
    basis1 = _basis(bsec, 1, (-r1, 0.0))
    basis2 = _basis(bsec, 2, (-r2, -r1))
    kappas = {1: basis1.kappa, 2: basis2.kappa}

    ksec = _section(doc, "kernels", required=False)
    for key, (field_name, rows, width, seg) in COEFFICIENTS.items():
        shape = (dims[rows], kappas[seg] * dims[width])
        mats[field_name] = _matrix(ksec, "kernels", key, shape, required=False)

    raw = ksec.get("raw") or {}
    if not isinstance(raw, dict):
        raise ProblemFileError("kernels.raw", "expected a mapping of kernel name to expression grid")
    for key in raw:
        if key not in {k.lower() for k in COEFFICIENTS}:
            raise ProblemFileError(f"kernels.raw.{key}", "unknown kernel name")

    try:
        return DelaySystem(**mats, r1=r1, r2=r2, basis1=basis1, basis2=basis2, raw_kernels=dict(raw), name=name)
    except DdssError as err:
        logger.error(f"System section rejected: {err}")
        raise ProblemFileError("system", str(err)) from err


def _supply(doc: dict, sys: DelaySystem) -> SupplyRate:
    sec = _section(doc, "supply")
    kind = str(sec.get("type", "l2gain"))
    m, q = sys.m, sys.q
    try:
        if kind == "l2gain":
            gamma = sec.get("gamma", "variable")
            return supply_l2(gamma, m, q)
        if kind == "passivity":
            return supply_passivity(_matrix(sec, "supply", "J1", (m, m)), m, q)
        if kind == "custom":
            return supply_custom(
                _matrix(sec, "supply", "J1", (m, m)),
                _matrix(sec, "supply", "Jt", (m, m)),
                _matrix(sec, "supply", "J2", (m, q)),
                _matrix(sec, "supply", "J3", (q, q)),
                m, q,
            )
    except ProblemFileError:
        raise
    except (DdssError, ValueError) as err:
        raise ProblemFileError(f"supply.{kind}", str(err)) from err
    raise ProblemFileError("supply.type", f"unknown supply type {kind!r} (l2gain | passivity | custom)")


def _solver(doc: dict):
    sec = _section(doc, "solver", required=False)
    tol = _number(sec, "solver", "tol", default=SOLVER_TOL)
    cfg = SolverConfig(
        name=str(sec.get("name", DEFAULT_SOLVER)).upper(),
        gap_tol=tol,
        feas_tol=tol,
        margin_rel=_number(sec, "solver", "margin", default=STRICT_MARGIN),
        max_iters=_number(sec, "solver", "max_iters", default=SOLVER_MAX_ITERS, kind=int),
    )
    quad = QuadConfig(
        order=_number(sec, "solver", "quad_order", default=QUAD_ORDER, kind=int),
        panels=_number(sec, "solver", "quad_panels", default=QUAD_PANELS, kind=int),
    )
    return cfg, quad


def _alg1(doc: dict) -> Alg1Config:
    sec = _section(doc, "alg1", required=False)
    alphas = sec.get("alphas")
    if isinstance(alphas, dict):
        try:
            alphas = {int(k): float(v) for k, v in alphas.items()}
        except (TypeError, ValueError):
            raise ProblemFileError("alg1.alphas", "expected a mapping of 1-based block index to number")
    elif alphas is not None and not isinstance(alphas, list):
        raise ProblemFileError("alg1.alphas", "expected a mapping or a list")
    try:
        return Alg1Config(
            rho1=_number(sec, "alg1", "rho1", default=RHO1),
            rho2=_number(sec, "alg1", "rho2", default=RHO2),
            eps=_number(sec, "alg1", "eps", default=EPS),
            max_iters=int(sec.get("max_iters", MAX_ITERS)),
            strategy=str(sec.get("strategy", DEFAULT_STRATEGY)),
            alphas=alphas,
        )
    except ValueError as err:
        raise ProblemFileError("alg1", str(err)) from err


def _sim(doc: dict, sys: DelaySystem) -> Optional[SimConfig]:
    sec = _section(doc, "sim", required=False)
    if not sec:
        return None
    window = sec.get("disturbance_window")
    if window is not None and (not isinstance(window, list) or len(window) != 2):
        raise ProblemFileError("sim.disturbance_window", "expected [start, end]")
    history = _expr_list(sec, "sim", "history")
    if len(history) != sys.n:
        raise ProblemFileError("sim.history", f"expected {sys.n} expressions, got {len(history)}")
    disturbance = _expr_list(sec, "sim", "disturbance")
    if disturbance and len(disturbance) != sys.q:
        raise ProblemFileError("sim.disturbance", f"expected {sys.q} expressions, got {len(disturbance)}")
    try:
        return SimConfig(
            t0=_number(sec, "sim", "t0", default=0.0),
            t_end=_number(sec, "sim", "t_end"),
            dt=_number(sec, "sim", "dt", default=DEFAULT_DT),
            kernel_nodes=_number(sec, "sim", "kernel_nodes", default=DEFAULT_KERNEL_NODES, kind=int),
            delay_expr=sec.get("delay", sys.r2),
            disturbance_exprs=disturbance,
            history_exprs=history,
            disturbance_window=tuple(window) if window is not None else None,
            record_every=_number(sec, "sim", "record_every", default=1, kind=int),
        )
    except ValueError as err:
        raise ProblemFileError("sim", str(err)) from err


# ============================================================
# ----- ENTRY POINTS -----
# ============================================================

def parse_problem(doc: dict, source: Optional[Path] = None) -> Problem:
    if not isinstance(doc, dict):
        raise ProblemFileError("<root>", "problem file must be a mapping")
    unknown = [k for k in doc if k not in SECTIONS]
    if unknown:
        raise ProblemFileError(unknown[0], "unknown section")
    name = str(doc.get("name") or (source.stem if source else "problem"))
    sys = _system(doc, name)
    supply = _supply(doc, sys)
    solver, quad = _solver(doc)
    return Problem(
        name=name,
        system=sys,
        supply=supply,
        solver=solver,
        quad=quad,
        alg1=_alg1(doc),
        sim=_sim(doc, sys),
        source=source,
    )


def load_problem(path) -> Problem:
    path = Path(path)
    if not path.exists():
        logger.error(f"Problem file not found: {path}")
        raise FileNotFoundError(path)
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            logger.error(f"YAML error in {path}: {err}")
            raise ProblemFileError("<root>", f"invalid YAML: {err}") from err
    problem = parse_problem(doc, path)
    sys = problem.system
    logger.info(
        f"Loaded {problem.name}: n={sys.n}, m={sys.m}, p={sys.p}, q={sys.q}, "
        f"[r1, r2]=[{sys.r1}, {sys.r2}], kappa=({sys.kappa1}, {sys.kappa2}), supply={problem.supply.kind}"
    )
    return problem
