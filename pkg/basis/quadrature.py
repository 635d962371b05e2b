"""Composite Gauss-Legendre quadrature for matrix-valued integrands."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

# --------------------------
# Configuration
# --------------------------
QUAD_ORDER = 32
QUAD_PANELS = 8


@dataclass(frozen=True)
class QuadConfig:
    order: int = QUAD_ORDER
    panels: int = QUAD_PANELS

    def __post_init__(self):
        if self.order < 1 or self.panels < 1:
            raise ValueError(f"quadrature order/panels must be positive, got {self.order}/{self.panels}")


DEFAULT_QUAD = QuadConfig()


@lru_cache(maxsize=32)
def _reference_rule(order: int):
    return leggauss(order)


def nodes_weights(a: float, b: float, cfg: QuadConfig = DEFAULT_QUAD):
    """Nodes and weights of the composite rule on [a, b], panel by panel, left to right."""
    x, w = _reference_rule(cfg.order)
    edges = np.linspace(a, b, cfg.panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def quad_matrix(integrand: Callable, a: float, b: float, cfg: QuadConfig = DEFAULT_QUAD,
                vectorized: bool = False) -> np.ndarray:
    """
    Entrywise integral of a matrix-valued function over [a, b].

    ``integrand(tau)`` returns a matrix; with ``vectorized=True`` it takes
    the array of all nodes and returns a stack of shape (nodes, rows, cols).
    Returns the zero matrix when a == b and the 0-size matrix when the
    integrand is 0-sized.
    """
    if b < a:
        raise ValueError(f"quad_matrix needs a <= b, got [{a}, {b}]")
    nodes, weights = nodes_weights(a, b, cfg)
    if vectorized:
        values = np.asarray(integrand(nodes), dtype=float)
    else:
        values = np.stack([np.atleast_2d(np.asarray(integrand(tau), dtype=float)) for tau in nodes])
    if values.ndim == 1:
        values = values[:, None, None]
    elif values.ndim == 2:
        values = values[:, :, None]
    if a == b:
        return np.zeros(values.shape[1:])
    if values[0].size == 0:
        return np.zeros(values.shape[1:])
    # fixed reduction order: per panel, then across panels
    per_panel = np.einsum("k,kij->kij", weights, values).reshape(cfg.panels, cfg.order, *values.shape[1:])
    return per_panel.sum(axis=1).sum(axis=0)


def quad_scalar(fn: Callable, a: float, b: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Integral of a vectorized scalar function."""
    if a == b:
        return 0.0
    nodes, weights = nodes_weights(a, b, cfg)
    return float(np.dot(weights, np.asarray(fn(nodes), dtype=float)))
