from lmi.algebra import AffineMatExpr, MatVar, as_expr, blocks, const, dsum, hstack, kron_const, sy, var_ref, vstack
from lmi.program import ConicProgram, LmiProblem, SolveOutcome, SolverConfig, write_sdpa
