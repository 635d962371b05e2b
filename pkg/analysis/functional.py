"""
Storage functional of a certificate evaluated on a state history:

    v = eta' [P1 P2; * P3] eta
        + int_{-r1}^0 x' (Q1 + (tau + r1) R1) x + int_{-r2}^{-r1} x' (Q2 + (tau + r2) R2) x

with eta = [x(0); int (F1^-1/2 f1 kron I) x; int (F2^-1/2 f2 kron I) x].
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from basis.kernel_basis import BasisGeometry, compute_geometry
from basis.quadrature import DEFAULT_QUAD, QuadConfig, nodes_weights
from models.delay_system import DelaySystem
from synthesis.certificate import Certificate
from utils.logger import setup_logger

logger = setup_logger("functional", log_file="functional.log")


@dataclass(eq=False)
class FunctionalEvaluator:
    certificate: Certificate
    sys: DelaySystem
    geo1: BasisGeometry
    geo2: BasisGeometry
    quad: QuadConfig = DEFAULT_QUAD

    @classmethod
    def build(cls, sys: DelaySystem, certificate: Certificate, quad: QuadConfig = DEFAULT_QUAD) -> "FunctionalEvaluator":
        return cls(certificate, sys, compute_geometry(sys.basis1, quad), compute_geometry(sys.basis2, quad), quad)

    def __call__(self, lookup: Callable, t: float) -> float:
        """v at time t for a lookup over absolute times."""
        return evaluate_functional(self, lambda thetas: lookup(t + np.asarray(thetas)))


def _segment_terms(basis, geo, segment, a, b, n, quad, weight_fn, q, r):
    """Projection int (F^-1/2 f kron I) x and the Q/R integral over [a, b]."""
    if a == b:
        return np.zeros(basis.d * n), 0.0
    taus, w = nodes_weights(a, b, quad)
    xs = np.asarray(segment(taus), dtype=float).reshape(taus.size, n)
    if basis.d:
        f_norm = basis.f_values(taus) @ geo.sqrt_f_inv.T         # (N, d)
        proj = np.einsum("k,ki,kc->ic", w, f_norm, xs).reshape(-1)
    else:
        proj = np.zeros(0)
    quad_form = np.einsum("kc,cd,kd->k", xs, q, xs) + weight_fn(taus) * np.einsum("kc,cd,kd->k", xs, r, xs)
    return proj, float(np.dot(w, quad_form))


def evaluate_functional(ev: FunctionalEvaluator, segment: Callable) -> float:
    """
    ``segment(thetas)`` returns the states x(t + theta) for theta in [-r2, 0],
    shape (len(thetas), n).
    """
    sys, cert, quad = ev.sys, ev.certificate, ev.quad
    n, r1, r2 = sys.n, sys.r1, sys.r2
    x0 = np.asarray(segment(np.array([0.0])), dtype=float).reshape(n)

    proj1, tail1 = _segment_terms(sys.basis1, ev.geo1, segment, -r1, 0.0, n, quad,
                                  lambda taus: taus + r1, cert.q1, cert.r1m)
    proj2, tail2 = _segment_terms(sys.basis2, ev.geo2, segment, -r2, -r1, n, quad,
                                  lambda taus: taus + r2, cert.q2, cert.r2m)
    eta = np.concatenate([x0, proj1, proj2])
    head = float(eta @ cert.p_matrix @ eta)
    return head + tail1 + tail2
