"""
Randomized property checks of the two integral lower bounds behind the
dissipation conditions:

    single interval:  int w x'Ux >= g' (F^-1 kron U) g,           g = int w (f kron I) x
    split at rho:     int w x'Ux >= [*] ([U Y; * U] kron F^-1) [int_rho^b w (I kron f) x; int_a^rho w (I kron f) x]

for U >= 0, [U Y; * U] >= 0 and F = int w f f' > 0. The split bound is also
evaluated in its commuted form on (f kron I) x, which must agree.
"""

from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from basis.quadrature import QuadConfig, nodes_weights
from utils.logger import setup_logger
from utils.tensor_core import commutation_matrix, dsum, kron, min_eig

logger = setup_logger("inequalities", log_file="inequalities.log")

# --------------------------
# Configuration
# --------------------------
BOUND_TOL = 1e-8
FORM_TOL = 1e-10
GRAM_COND_MAX = 1e6
Y_SHRINK_STEPS = 60
MAX_N = 3
MAX_D = 4
CHECK_QUAD = QuadConfig(order=32, panels=4)


def _integrals(f_fn: Callable, x_fn: Callable, a: float, b: float, weight: Optional[Callable], quad: QuadConfig):
    """Quadrature weights times the density, with f and x sampled on [a, b]."""
    taus, w = nodes_weights(a, b, quad)
    if weight is not None:
        w = w * np.asarray(weight(taus), dtype=float)
    fs = np.asarray(f_fn(taus), dtype=float).reshape(taus.size, -1)
    xs = np.asarray(x_fn(taus), dtype=float).reshape(taus.size, -1)
    return w, fs, xs


def _quad_form(w, xs, u) -> float:
    return float(np.dot(w, np.einsum("ki,ij,kj->k", xs, u, xs)))


def single_interval_bound(u, f_fn, x_fn, a, b, weight=None, quad: QuadConfig = CHECK_QUAD):
    """Returns (lhs, rhs) of the single-interval bound."""
    u = np.atleast_2d(u)
    w, fs, xs = _integrals(f_fn, x_fn, a, b, weight, quad)
    gram = np.einsum("k,ki,kj->ij", w, fs, fs)
    g = np.einsum("k,ki,kc->ic", w, fs, xs).reshape(-1)          # (f kron I) ordering
    rhs = float(g @ kron(np.linalg.inv(gram), u) @ g)
    return _quad_form(w, xs, u), rhs


def split_bound(u, y, f_fn, x_fn, a, b, rho, weight=None, quad: QuadConfig = CHECK_QUAD):
    """Returns (lhs, rhs, rhs_commuted) of the split bound at rho in [a, b]."""
    u, y = np.atleast_2d(u), np.atleast_2d(y)
    n = u.shape[0]
    w_lo, f_lo, x_lo = _integrals(f_fn, x_fn, a, rho, weight, quad) if rho > a else (np.zeros(0), None, None)
    w_hi, f_hi, x_hi = _integrals(f_fn, x_fn, rho, b, weight, quad) if b > rho else (np.zeros(0), None, None)
    d = (f_lo if f_lo is not None else f_hi).shape[1]

    def parts(w, fs, xs):
        if fs is None:
            return np.zeros((d, d)), np.zeros(n * d), np.zeros(n * d), 0.0
        gram = np.einsum("k,ki,kj->ij", w, fs, fs)
        g_fi = np.einsum("k,ki,kc->ic", w, fs, xs).reshape(-1)   # (f kron I) x
        g_if = np.einsum("k,kc,ki->ci", w, xs, fs).reshape(-1)   # (I kron f) x
        return gram, g_fi, g_if, _quad_form(w, xs, u)

    gram_lo, gfi_lo, gif_lo, lhs_lo = parts(w_lo, f_lo, x_lo)
    gram_hi, gfi_hi, gif_hi, lhs_hi = parts(w_hi, f_hi, x_hi)
    f_inv = np.linalg.inv(gram_lo + gram_hi)
    block = np.block([[u, y], [y.T, u]])

    stacked = np.concatenate([gif_hi, gif_lo])
    rhs = float(stacked @ kron(block, f_inv) @ stacked)

    comm = dsum(commutation_matrix(n, d), commutation_matrix(n, d))
    stacked_fi = np.concatenate([gfi_hi, gfi_lo])
    rhs_commuted = float(stacked_fi @ (comm.T @ kron(block, f_inv) @ comm) @ stacked_fi)
    return lhs_lo + lhs_hi, rhs, rhs_commuted


# ============================================================
# ----- RANDOM INSTANCES -----
# ============================================================

_FAMILY = (
    lambda t: np.ones_like(t),
    lambda t: t,
    lambda t: t ** 2,
    np.sin,
    np.cos,
    np.exp,
)

_WEIGHTS = {
    "unit": None,
    "left": lambda a, b: (lambda t: t - a),
    "right": lambda a, b: (lambda t: b - t),
}


def _random_instance(rng: np.random.Generator) -> dict:
    n = int(rng.integers(1, MAX_N + 1))
    d = int(rng.integers(1, MAX_D + 1))
    a = float(rng.uniform(0.0, 1.0))
    b = a + float(rng.uniform(0.2, 2.0))
    rho = float(rng.uniform(a, b))

    weight_name = str(rng.choice(list(_WEIGHTS)))
    weight = _WEIGHTS[weight_name](a, b) if _WEIGHTS[weight_name] else None

    while True:
        mix = rng.normal(size=(d, len(_FAMILY)))

        def f_fn(t, mix=mix):
            t = np.asarray(t, dtype=float)
            return np.column_stack([g(t) for g in _FAMILY]) @ mix.T

        w, fs, _ = _integrals(f_fn, lambda t: np.zeros((np.size(t), 1)), a, b, weight, CHECK_QUAD)
        if np.linalg.cond(np.einsum("k,ki,kj->ij", w, fs, fs)) < GRAM_COND_MAX:
            break

    amp = rng.normal(size=(3, n))
    freq = rng.uniform(0.5, 4.0, size=(3, n))
    phase = rng.uniform(0.0, 2 * np.pi, size=(3, n))

    def x_fn(t):
        t = np.asarray(t, dtype=float)[:, None, None]
        return np.sum(amp * np.cos(freq * t + phase), axis=1)

    rank = int(rng.integers(1, n + 1))
    factor = rng.normal(size=(n, rank))
    u = factor @ factor.T

    y = rng.normal(size=(n, n))
    for _ in range(Y_SHRINK_STEPS):
        if min_eig(np.block([[u, y], [y.T, u]])) >= -BOUND_TOL * max(1.0, np.linalg.norm(u)):
            break
        y *= 0.5
    else:
        y = np.zeros((n, n))

    return {"n": n, "d": d, "a": a, "b": b, "rho": rho, "weight": weight_name,
            "u": u, "y": y, "f_fn": f_fn, "x_fn": x_fn, "w_fn": weight}


def check_integral_inequalities(trials: int, seed: int = 0, progress: bool = False) -> dict:
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    logger.info(f"===== Integral Inequality Checks Started ({trials} trials, seed={seed}) =====")
    children = np.random.SeedSequence(seed).spawn(trials)

    worst_single, worst_split, worst_form = np.inf, np.inf, 0.0
    failures = []
    iterator = enumerate(children)
    for i, child in (tqdm(iterator, total=trials, desc="Inequality trials") if progress else iterator):
        inst = _random_instance(np.random.default_rng(child))
        lhs1, rhs1 = single_interval_bound(inst["u"], inst["f_fn"], inst["x_fn"], inst["a"], inst["b"], inst["w_fn"])
        lhs2, rhs2, rhs2c = split_bound(inst["u"], inst["y"], inst["f_fn"], inst["x_fn"],
                                        inst["a"], inst["b"], inst["rho"], inst["w_fn"])
        scale = max(1.0, abs(lhs1))
        gap1 = (lhs1 - rhs1) / scale
        gap2 = (lhs2 - rhs2) / scale
        form = abs(rhs2 - rhs2c) / max(1.0, abs(rhs2))
        worst_single = min(worst_single, gap1)
        worst_split = min(worst_split, gap2)
        worst_form = max(worst_form, form)

        ok = gap1 >= -BOUND_TOL and gap2 >= -BOUND_TOL and form <= FORM_TOL
        if not ok:
            failures.append({
                "trial": i, "n": inst["n"], "d": inst["d"], "a": inst["a"], "b": inst["b"],
                "rho": inst["rho"], "weight": inst["weight"],
                "single_gap": gap1, "split_gap": gap2, "form_mismatch": form,
            })
            logger.warning(f"Trial {i} failed: single {gap1:.3e}, split {gap2:.3e}, form {form:.3e}")

    report = {
        "check": "integral_inequalities",
        "trials": trials,
        "seed": seed,
        "passed": not failures,
        "worst_single_gap": float(worst_single),
        "worst_split_gap": float(worst_split),
        "worst_form_mismatch": float(worst_form),
        "failures": failures,
    }
    logger.info(f"===== Integral Inequality Checks Completed: {trials - len(failures)}/{trials} passed =====")
    return report
