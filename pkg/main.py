"""
ddss command line.

    ddss validate|analyze|synthesize|iterate|simulate|spectrum|check <problem-file> [flags]

Tables go to stdout as CSV; logs go to stderr and logs/.
Exit codes: 0 pass/feasible, 2 infeasible or failed check, 3 input error,
4 solver error.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from analysis.cross_check import cross_check_thm2
from analysis.functional import FunctionalEvaluator
from analysis.inequalities import check_integral_inequalities
from analysis.spectrum import scan_window, spectral_abscissa
from basis.kernel_basis import compute_geometry
from basis.quadrature import QuadConfig
from data.problem_loader import Problem, load_problem
from lmi.program import write_sdpa
from models.supply_rate import supply_l2
from simulation.engine import empirical_supply_check, simulate
from synthesis.certificate import Certificate, Thm2Solution
from synthesis.inner_convex import algorithm1
from synthesis.theorem1 import analyze, analyze_sweep, build_context, build_thm1
from synthesis.theorem2 import synthesize_thm2
from utils.errors import (
    DdssError,
    DimensionMismatch,
    Infeasible,
    IterationInfeasible,
    NotPositiveDefinite,
    ProblemFileError,
    SolverError,
)
from utils.logger import setup_logger

logger = setup_logger("ddss", log_file="ddss.log")

# --------------------------
# Configuration
# --------------------------
EXIT_OK = 0
EXIT_FAILED = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4
SEED_ENV = "DDSS_SEED"
DEFAULT_TRIALS = 500
RESULTS_DIR = Path("results")


# ============================================================
# ----- ARGUMENT HELPERS -----
# ============================================================

def parse_gain(text: str, p: int, n: int) -> np.ndarray:
    """'k11,k12;k21,k22' -> (p, n) array; rows separated by ';'."""
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
        k = np.array(rows, dtype=float)
    except ValueError as err:
        raise ValueError(f"cannot parse gain {text!r}: {err}") from err
    if k.size != p * n:
        logger.error(f"Gain {text!r} has {k.size} entries, expected {p}x{n}")
        raise DimensionMismatch(f"gain has {k.size} entries, expected p x n = {p}x{n}")
    return k.reshape(p, n)


def parse_alphas(items) -> dict:
    alphas = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--alpha expects i=v, got {item!r}")
        alphas[int(key)] = float(val)
    return alphas


def parse_intervals(text: str):
    out = []
    for chunk in text.split(","):
        a, sep, b = chunk.partition(":")
        if not sep:
            raise ValueError(f"--sweep expects r1:r2 pairs, got {chunk!r}")
        out.append((float(a), float(b)))
    return out


def parse_range(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(":")]
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ValueError(f"--scan expects a:b:step with a <= b and step > 0, got {text!r}")
    a, b, step = parts
    return np.round(np.arange(a, b + 0.5 * step, step), 12)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError as err:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from err


def apply_overrides(problem: Problem, args) -> Problem:
    """Global flags win over the problem file."""
    solver = problem.solver
    if args.solver_tol is not None:
        solver = replace(solver, gap_tol=args.solver_tol, feas_tol=args.solver_tol)
    if args.margin is not None:
        solver = replace(solver, margin_rel=args.margin)
    quad = problem.quad
    if args.quad_order is not None or args.quad_panels is not None:
        quad = QuadConfig(
            order=args.quad_order if args.quad_order is not None else quad.order,
            panels=args.quad_panels if args.quad_panels is not None else quad.panels,
        )
    return replace(problem, solver=solver, quad=quad)


def emit_table(df: pd.DataFrame, csv_path=None) -> None:
    df.to_csv(sys.stdout, index=False)
    if csv_path:
        path = Path(csv_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
        logger.info(f"Table saved to {path}")


def emit_json(report: dict, json_path=None) -> None:
    text = json.dumps(report, indent=2, default=float)
    if json_path:
        path = Path(json_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
        logger.info(f"Report saved to {path}")
    else:
        print(text)


def load_certificate(path, system) -> Certificate:
    """Certificate JSON, or a convex-synthesis solution mapped back through X^-1."""
    with open(path) as fh:
        data = json.load(fh)
    if "thm2_solution" in data:
        raw = data["thm2_solution"]
        arrays = {k: np.asarray(v, dtype=float) for k, v in raw.items()
                  if k not in ("alphas", "gamma", "status", "seconds")}
        sol = Thm2Solution(**arrays, alphas=raw.get("alphas", []), gamma=raw.get("gamma"),
                           status=raw.get("status", "optimal"), seconds=raw.get("seconds", 0.0))
        return sol.to_certificate(system)
    return Certificate.from_dict(data.get("certificate", data))


# ============================================================
# ----- COMMANDS -----
# ============================================================

def cmd_validate(problem: Problem, args) -> int:
    system = problem.system
    report = system.validate()
    for label, basis in (("basis1", system.basis1), ("basis2", system.basis2)):
        if basis.is_empty:
            continue
        check = {"check": "gram_spd", "target": label, "interval": list(basis.interval)}
        try:
            geo = compute_geometry(basis, problem.quad)
            check.update(passed=True, cond=float(np.linalg.cond(geo.g)))
        except NotPositiveDefinite as err:
            check.update(passed=False, error=str(err))
        report["checks"].append(check)
    report["passed"] = all(c["passed"] for c in report["checks"])
    emit_json(report, args.json)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def _analysis_supply(problem: Problem, args):
    supply = problem.supply
    if args.gamma is not None:
        return supply_l2(args.gamma, problem.system.m, problem.system.q)
    if args.min_gamma and not supply.gamma_mode:
        if supply.kind != "l2gain":
            raise ValueError(f"--min-gamma needs an l2gain supply, the file declares {supply.kind}")
        return supply_l2("variable", problem.system.m, problem.system.q)
    return supply


def cmd_analyze(problem: Problem, args) -> int:
    system = problem.system
    supply = _analysis_supply(problem, args)
    k = parse_gain(args.k, system.p, system.n) if args.k else None

    if args.sweep:
        rows = analyze_sweep(system, supply, parse_intervals(args.sweep), k, problem.solver, problem.quad)
        emit_table(pd.DataFrame(rows), args.csv)
        return EXIT_OK if all(r["status"] != "infeasible" for r in rows) else EXIT_FAILED

    if args.dump_sdpa:
        prob, _ = build_thm1(build_context(system, supply, problem.quad),
                             np.zeros((system.p, system.n)) if k is None else k)
        write_sdpa(prob.scalarize(problem.solver.margin_rel), args.dump_sdpa)

    row = {"r1": system.r1, "r2": system.r2, "r3": system.r3}
    try:
        cert = analyze(system, supply, k, problem.solver, problem.quad)
    except Infeasible:
        row.update(status="infeasible", gamma=None)
        emit_table(pd.DataFrame([row]), args.csv)
        return EXIT_FAILED
    row.update(status=cert.status, gamma=cert.gamma, seconds=cert.seconds)
    emit_table(pd.DataFrame([row]), args.csv)
    if args.json:
        cert.save_json(args.json)
    return EXIT_OK


def cmd_synthesize(problem: Problem, args) -> int:
    alphas = parse_alphas(args.alpha) or problem.alg1.alphas
    sol = synthesize_thm2(problem.system, problem.supply, alphas, problem.solver, problem.quad)
    row = {"status": sol.status, "gamma": sol.gamma, "gain_residual": sol.gain_residual()}
    for i, val in enumerate(sol.k.ravel(), start=1):
        row[f"k{i}"] = float(val)
    emit_table(pd.DataFrame([row]), args.csv)
    if args.json:
        sol.save_json(args.json)
    if args.cross_check:
        report = cross_check_thm2(problem.system, problem.supply, sol, problem.solver, problem.quad)
        emit_json(report)
        return EXIT_OK if report["passed"] else EXIT_FAILED
    return EXIT_OK


def cmd_iterate(problem: Problem, args) -> int:
    cfg = problem.alg1
    if args.iters is not None:
        cfg = replace(cfg, max_iters=args.iters)
    if args.strategy:
        cfg = replace(cfg, strategy=args.strategy)
    alphas = parse_alphas(args.alpha)
    if alphas:
        cfg = replace(cfg, alphas=alphas)

    try:
        cert, state = algorithm1(problem.system, problem.supply, cfg, problem.solver, problem.quad)
    except IterationInfeasible as err:
        if err.last_state is not None:
            emit_table(err.last_state.to_df(), args.csv)
        raise
    emit_table(state.to_df(), args.csv)
    if args.json:
        cert.save_json(args.json)
    return EXIT_OK


def cmd_simulate(problem: Problem, args) -> int:
    if problem.sim is None:
        logger.error(f"{problem.name}: no sim section")
        raise ProblemFileError("sim", "simulate needs a sim section")
    system, cfg = problem.system, problem.sim
    if args.t_end is not None:
        cfg = replace(cfg, t_end=args.t_end)
    if args.dt is not None:
        cfg = replace(cfg, dt=args.dt)

    cert = load_certificate(args.from_synthesis, system) if args.from_synthesis else None
    if args.k:
        k = parse_gain(args.k, system.p, system.n)
    elif cert is not None:
        k = cert.k
    else:
        k = None

    traj = simulate(system, k, cfg, progress=True)
    out = Path(args.out) if args.out else RESULTS_DIR / f"{problem.name}_trajectory.csv"
    traj.save_csv(out)
    report = {"trajectory": str(out), "k": None if k is None else np.asarray(k).tolist(), "stats": traj.stats()}

    passed = True
    if args.check_dissipation:
        if cert is None:
            cert = analyze(system, problem.supply, k, problem.solver, problem.quad)
        ev = FunctionalEvaluator.build(system, cert, problem.quad)
        report["dissipation"] = empirical_supply_check(traj, problem.supply, ev, gamma=cert.gamma)
        passed = report["dissipation"]["passed"]
    emit_json(report, args.json)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_spectrum(problem: Problem, args) -> int:
    system = problem.system
    k = parse_gain(args.k, system.p, system.n) if args.k else None
    if args.scan:
        scan = scan_window(system, k, parse_range(args.scan))
        emit_table(scan["table"], args.csv)
        emit_json({"window": scan["window"]}, args.json)
        return EXIT_OK if scan["window"] else EXIT_FAILED
    result = spectral_abscissa(system, k, args.r)
    emit_json(result.to_dict(), args.json)
    return EXIT_OK if result.stable else EXIT_FAILED


def cmd_check(problem, args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    report = check_integral_inequalities(args.trials, seed=seed)
    passed = report["passed"]
    if problem is not None:
        report["validation"] = problem.system.validate()
        passed = passed and report["validation"]["passed"]
    emit_json(report, args.json)
    return EXIT_OK if passed else EXIT_FAILED


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "iterate": cmd_iterate,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "check": cmd_check,
}


# ============================================================
# ----- PARSER -----
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--solver-tol", type=float, help="Solver gap and feasibility tolerance")
    common.add_argument("--margin", type=float, help="Relative strictness margin for the LMIs")
    common.add_argument("--quad-order", type=int, help="Gauss-Legendre nodes per panel")
    common.add_argument("--quad-panels", type=int, help="Quadrature panels per interval")
    common.add_argument("--json", help="Write the JSON report/certificate to this path")

    parser = argparse.ArgumentParser(prog="ddss", description="Dissipative analysis and synthesis for distributed-delay systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="Basis ODE closure, Gram and kernel decomposition checks")
    p.add_argument("file")

    p = sub.add_parser("analyze", parents=[common], help="Fixed-gain dissipativity analysis")
    p.add_argument("file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--min-gamma", action="store_true", help="Minimize the L2 gain")
    mode.add_argument("--gamma", type=float, help="Feasibility at a fixed L2 gain")
    p.add_argument("--r1", type=float)
    p.add_argument("--r2", type=float)
    p.add_argument("--k", help="Gain as 'k11,k12;k21,k22'")
    p.add_argument("--sweep", help="Intervals 'r1:r2,r1:r2,...'")
    p.add_argument("--csv")
    p.add_argument("--dump-sdpa", help="Write the scalarized program in SDPA sparse format")

    p = sub.add_parser("synthesize", parents=[common], help="Convex state-feedback synthesis")
    p.add_argument("file")
    p.add_argument("--alpha", action="append", help="Scaling i=v (1-based block index), repeatable")
    p.add_argument("--csv")
    p.add_argument("--cross-check", action="store_true", help="Re-run the analysis with the synthesized gain")

    p = sub.add_parser("iterate", parents=[common], help="Inner convex iteration from the convex synthesis")
    p.add_argument("file")
    p.add_argument("--iters", type=int)
    p.add_argument("--strategy", choices=("lexicographic", "proximal"))
    p.add_argument("--alpha", action="append")
    p.add_argument("--csv")

    p = sub.add_parser("simulate", parents=[common], help="Closed-loop simulation")
    p.add_argument("file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--k", help="Gain as 'k11,k12;k21,k22'")
    src.add_argument("--from-synthesis", help="Certificate or synthesis JSON")
    p.add_argument("--out", help="Trajectory CSV path")
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--check-dissipation", action="store_true")

    p = sub.add_parser("spectrum", parents=[common], help="Spectral abscissa at a constant delay")
    p.add_argument("file")
    p.add_argument("--k")
    p.add_argument("--r", type=float, help="Constant delay (default: midpoint of [r1, r2])")
    p.add_argument("--scan", help="Grid a:b:step of constant delays")
    p.add_argument("--csv")

    p = sub.add_parser("check", parents=[common], help="Randomized integral-inequality checks")
    p.add_argument("file", nargs="?")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, help=f"Defaults to ${SEED_ENV} or 0")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        problem = None
        if args.file:
            problem = apply_overrides(load_problem(args.file), args)
            r1 = getattr(args, "r1", None)
            r2 = getattr(args, "r2", None)
            if r1 is not None or r2 is not None:
                problem = problem.with_delays(r1, r2)
        return COMMANDS[args.command](problem, args)
    except Infeasible as err:
        logger.error(f"{args.command}: {err}")
        return EXIT_FAILED
    except SolverError as err:
        logger.error(f"{args.command}: {err}")
        return EXIT_SOLVER
    except (FileNotFoundError, ValueError) as err:
        logger.error(f"{args.command}: input error: {err}")
        return EXIT_INPUT
    except DdssError as err:
        # remaining runtime failures: singular X, non-finite state, non-convergent spectrum
        logger.error(f"{args.command}: {type(err).__name__}: {err}")
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
