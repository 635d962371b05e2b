import math

import numpy as np
import pytest
from scipy.integrate import quad as adaptive_quad

from basis.expression import eval_array, eval_expr, parse_expr, pretty
from basis.kernel_basis import KernelBasis, check_decomposition, check_ode_closure, compute_geometry, gram
from basis.quadrature import QuadConfig, quad_matrix, quad_scalar
from utils.errors import DimensionError, DomainError, ExprSyntaxError, NotPositiveDefinite

REFINED = QuadConfig(order=64, panels=32)


# ----- expressions -----

def test_parse_and_evaluate():
    assert eval_expr(parse_expr("exp(sin(5*t))"), 0.0) == pytest.approx(1.0)
    assert eval_expr(parse_expr("ln(2 - t)"), -1.0) == pytest.approx(math.log(3.0), rel=1e-14)
    assert eval_expr(parse_expr("1"), 123.0) == 1.0
    got = eval_expr(parse_expr("cos(5*t)*exp(sin(5*t))"), -0.2)
    assert got == pytest.approx(math.cos(-1.0) * math.exp(math.sin(-1.0)), rel=1e-14)


def test_precedence_of_power_and_minus():
    assert eval_expr(parse_expr("-t^2"), 3.0) == -9.0
    assert eval_expr(parse_expr("2^3^2"), 0.0) == 512.0
    assert eval_expr(parse_expr("8 - 3 - 2"), 0.0) == 3.0
    assert eval_expr(parse_expr("8 / 4 / 2"), 0.0) == 1.0


def test_syntax_error_reports_offset():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("2 *")
    assert err.value.offset == 3


def test_unknown_identifier_is_a_syntax_error():
    with pytest.raises(ExprSyntaxError):
        parse_expr("tan(t)")


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_expr(parse_expr("ln(t)"), -1.0)
    with pytest.raises(DomainError):
        eval_expr(parse_expr("1/t"), 0.0)


def test_vectorized_evaluation_and_source_round_trip():
    e = parse_expr("sin(exp(t)) + 0.5*t")
    ts = np.linspace(-1.0, 0.0, 7)
    np.testing.assert_allclose(eval_array(e, ts), np.sin(np.exp(ts)) + 0.5 * ts, atol=1e-15)
    np.testing.assert_allclose(eval_array(parse_expr(pretty(e)), ts), eval_array(e, ts), atol=0)
    assert eval_array(parse_expr("3"), ts).shape == ts.shape


ROUND_TRIP_EXPRS = [
    "exp(sin(5*t))",
    "cos(5*t)*exp(sin(5*t))",
    "-t^2 + 3*t - 1",
    "ln(2 - t)/(1 + t^2)",
    "2^t - (t - 0.25)*(t + 0.75)/3",
    "sin(exp(t)) + 0.5*t",
]


@pytest.mark.parametrize("text", ROUND_TRIP_EXPRS)
def test_printed_source_reparses_to_the_same_function(text):
    ts = np.random.default_rng(5).uniform(-1.0, 0.0, 100)
    e = parse_expr(text)
    again = parse_expr(pretty(e))
    np.testing.assert_array_equal(eval_array(again, ts), eval_array(e, ts))
    for t in ts[:10]:
        assert eval_expr(e, t) == pytest.approx(eval_array(e, [t])[0], rel=1e-13)


# ----- quadrature -----

def test_quad_matrix_constant_and_gram():
    np.testing.assert_allclose(quad_matrix(lambda tau: np.array([[1.0]]), -1.0, 0.0), [[1.0]], atol=1e-14)
    g = quad_matrix(lambda tau: np.outer([1.0, tau], [1.0, tau]), -1.0, 0.0)
    np.testing.assert_allclose(g, [[1.0, -0.5], [-0.5, 1.0 / 3.0]], atol=1e-14)


def test_quad_matrix_empty_interval_and_bad_order():
    np.testing.assert_array_equal(quad_matrix(lambda tau: np.eye(2), 0.5, 0.5), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        quad_matrix(lambda tau: np.eye(1), 1.0, 0.0)


def test_quad_scalar_matches_adaptive_oracle():
    oracle, _ = adaptive_quad(lambda s: math.exp(math.sin(5 * s)), -1.0, 0.0, epsabs=1e-14, epsrel=1e-14, limit=200)
    assert quad_scalar(lambda tau: np.exp(np.sin(5 * tau)), -1.0, 0.0) == pytest.approx(oracle, abs=1e-10)


# ----- geometry -----

def test_geometry_of_constant_basis():
    geo = compute_geometry(KernelBasis.from_sources(["1"], [], [[0]], (-1.0, 0.0)))
    for mat in (geo.g, geo.f_gram, geo.sqrt_g, geo.sqrt_g_inv, geo.sqrt_f, geo.sqrt_f_inv):
        np.testing.assert_allclose(mat, [[1.0]], atol=1e-13)


def test_geometry_rejects_dependent_functions():
    with pytest.raises(NotPositiveDefinite):
        compute_geometry(KernelBasis.from_sources(["1", "1"], [], np.zeros((2, 2)), (-1.0, 0.0)))


def test_basis_shape_checks():
    with pytest.raises(DimensionError):
        KernelBasis.from_sources(["1", "t"], [], [[0, 0]], (-1.0, 0.0))
    with pytest.raises(DimensionError):
        KernelBasis.from_sources(["1"], [], [[0]], (0.0, 0.0))


@pytest.mark.slow
@pytest.mark.parametrize("which", ["basis1", "basis2"])
def test_geometry_of_shipped_bases_matches_refined_oracle(open_loop_problem, controlled_problem, which):
    for problem in (open_loop_problem, controlled_problem):
        basis = getattr(problem.system, which)
        geo = compute_geometry(basis)
        assert geo.g.shape == (basis.kappa, basis.kappa)
        assert geo.f_gram.shape == (basis.d, basis.d)
        assert np.linalg.eigvalsh(geo.g).min() > 0.0
        np.testing.assert_allclose(geo.g, gram(basis, REFINED, "f_hat"), atol=1e-9)
        np.testing.assert_allclose(geo.f_gram, gram(basis, REFINED, "f"), atol=1e-9)


def test_open_loop_basis_sizes(open_loop_problem):
    basis = open_loop_problem.system.basis1
    assert (basis.d, basis.delta, basis.kappa) == (4, 3, 7)
    assert basis.interval == (-0.98, 0.0)


# ----- structure checks -----

def test_ode_closure_passes_on_shipped_bases(open_loop_problem, controlled_problem):
    for problem in (open_loop_problem, controlled_problem):
        for basis in (problem.system.basis1, problem.system.basis2):
            assert check_ode_closure(basis, tol=1e-6)["passed"]


def test_ode_closure_fails_with_zeroed_row(open_loop_problem):
    basis = open_loop_problem.system.basis1
    m = basis.m_matrix.copy()
    m[1] = 0.0
    broken = KernelBasis(basis.f, basis.phi, m, basis.interval)
    report = check_ode_closure(broken)
    assert not report["passed"]
    assert report["worst_row"] == 1
    taus = np.linspace(*basis.interval, 2001)
    expected = np.max(np.abs(5.0 * np.cos(5.0 * taus) * np.exp(np.sin(5.0 * taus))))
    assert report["worst_deviation"] == pytest.approx(expected, rel=1e-2)


def test_decomposition_of_open_loop_kernel(open_loop_problem):
    sys = open_loop_problem.system
    assert check_decomposition(sys.raw_kernels["a2"], sys.a2, sys.basis1, sys.n)["passed"]
    assert check_decomposition(sys.raw_kernels["c2"], sys.c2, sys.basis1, sys.m)["passed"]


def test_decomposition_of_controlled_kernels(controlled_problem):
    sys = controlled_problem.system
    assert check_decomposition(sys.raw_kernels["a3"], sys.a3, sys.basis2, sys.n)["passed"]
    assert check_decomposition(sys.raw_kernels["b6"], sys.b6k, sys.basis2, sys.m)["passed"]


def test_decomposition_detects_perturbed_coefficient(open_loop_problem):
    sys = open_loop_problem.system
    coeff = sys.a2.copy()
    coeff[0, 6] += 0.1           # multiplies f = 1 in entry (0, 0)
    report = check_decomposition(sys.raw_kernels["a2"], coeff, sys.basis1, sys.n)
    assert not report["passed"]
    assert report["worst_entry"] == [0, 0]
    assert report["worst_deviation"] == pytest.approx(0.1, rel=1e-9)


def test_decomposition_shape_mismatch(open_loop_problem):
    sys = open_loop_problem.system
    with pytest.raises(DimensionError):
        check_decomposition(sys.raw_kernels["a2"], sys.a2[:, :-2], sys.basis1, sys.n)
