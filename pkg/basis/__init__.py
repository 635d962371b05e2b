from basis.expression import eval_array, eval_expr, parse_expr, pretty
from basis.kernel_basis import (
    BasisGeometry,
    KernelBasis,
    check_decomposition,
    check_ode_closure,
    compute_geometry,
)
from basis.quadrature import DEFAULT_QUAD, QuadConfig, quad_matrix

__all__ = [
    "BasisGeometry",
    "DEFAULT_QUAD",
    "KernelBasis",
    "QuadConfig",
    "check_decomposition",
    "check_ode_closure",
    "compute_geometry",
    "eval_array",
    "eval_expr",
    "parse_expr",
    "pretty",
    "quad_matrix",
]
