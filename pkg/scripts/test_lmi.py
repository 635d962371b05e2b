import numpy as np
import pytest

from lmi.algebra import AffineMatExpr, blocks, const, kron_const, sy
from lmi.program import LmiProblem, SolverConfig, write_sdpa
from utils.errors import AffineViolation, DimensionError


# ----- affine expressions -----

def test_sy_of_symmetric_variable_doubles_it():
    prob = LmiProblem()
    p = prob.ref(prob.declare("P", 2).name)
    x = np.array([1.0, 2.0, 3.0])           # P = [[1, 2], [2, 3]]
    np.testing.assert_allclose(sy(p).evaluate(x), 2.0 * np.array([[1.0, 2.0], [2.0, 3.0]]))


def test_kron_with_identity_repeats_variable():
    prob = LmiProblem()
    q = prob.ref(prob.declare("Q", 2).name)
    expr = kron_const(np.eye(2), q)
    assert expr.shape == (4, 4)
    x = np.array([1.0, 0.5, 2.0])
    qv = np.array([[1.0, 0.5], [0.5, 2.0]])
    np.testing.assert_allclose(expr.evaluate(x), np.kron(np.eye(2), qv))


def test_product_of_variables_is_rejected():
    prob = LmiProblem()
    x = prob.ref(prob.declare("X", 2).name)
    v = prob.ref(prob.declare("V", 1, 2, "full").name)
    with pytest.raises(AffineViolation):
        v @ x
    with pytest.raises(AffineViolation):
        kron_const(x, v)


def test_constant_times_variable_and_transpose():
    prob = LmiProblem()
    v = prob.ref(prob.declare("V", 1, 2, "full").name)
    a = np.array([[1.0], [2.0]])
    expr = a @ v
    x = np.array([3.0, 4.0])
    np.testing.assert_allclose(expr.evaluate(x), a @ np.array([[3.0, 4.0]]))
    np.testing.assert_allclose(expr.T.evaluate(x), (a @ np.array([[3.0, 4.0]])).T)


def test_blocks_elide_empty_stripes_and_check_sizes():
    out = blocks([[np.eye(2), np.zeros((2, 0))], [np.zeros((0, 2)), np.zeros((0, 0))]])
    assert out.shape == (2, 2)
    with pytest.raises(DimensionError):
        blocks([[np.eye(2), np.eye(3)]])
    with pytest.raises(DimensionError):
        const(np.eye(2)) + const(np.eye(3))


def test_scalar_multiplication_only():
    e = AffineMatExpr.constant(np.eye(2))
    np.testing.assert_array_equal((3.0 * e).const, 3.0 * np.eye(2))
    with pytest.raises(TypeError):
        e * np.eye(2)


# ----- programs -----

def test_minimize_scalar_above_one():
    prob = LmiProblem("scalar")
    x = prob.ref(prob.declare("x", 1, kind="scalar").name)
    prob.add_lmi("lower", x - 1.0 * const([[1.0]]), ">=0")
    prob.set_objective(x)
    outcome = prob.solve(SolverConfig())
    assert outcome.feasible
    assert outcome.value("x") == pytest.approx(1.0, abs=1e-6)


def test_lyapunov_feasibility():
    a = -np.eye(2)
    prob = LmiProblem("lyapunov")
    p = prob.ref(prob.declare("P", 2).name)
    prob.add_lmi("p_pos", p, ">0")
    prob.add_lmi("decrease", sy(a.T @ p), "<0")
    outcome = prob.solve()
    assert outcome.feasible
    pv = outcome.value("P")
    assert np.linalg.eigvalsh(pv).min() > 0.0
    assert np.linalg.eigvalsh(a.T @ pv + pv @ a).max() < 0.0


def test_contradictory_bounds_are_infeasible():
    prob = LmiProblem("contradiction")
    x = prob.ref(prob.declare("x", 1, kind="scalar").name)
    prob.add_lmi("upper", x + const([[1.0]]), "<=0")
    prob.add_lmi("lower", x - const([[1.0]]), ">=0")
    outcome = prob.solve()
    assert outcome.status == "infeasible"
    assert not outcome.feasible


def test_asymmetric_constraint_rejected():
    prob = LmiProblem()
    v = prob.ref(prob.declare("V", 2, 2, "full").name)
    prob.add_lmi("bad", v, ">=0")
    with pytest.raises(DimensionError):
        prob.scalarize()


def test_sum_of_squares_term():
    prob = LmiProblem("proximal")
    x = prob.ref(prob.declare("x", 1, kind="scalar").name)
    prob.add_lmi("lower", x - const([[1.0]]), ">=0")
    prob.add_sum_squares("dist", x - const([[3.0]]))
    outcome = prob.solve()
    assert outcome.value("x") == pytest.approx(3.0, abs=1e-4)


def test_scalarized_blocks_match_expressions():
    a = np.array([[-1.0, 0.5], [0.0, -2.0]])
    prob = LmiProblem("lyapunov_margin")
    p = prob.ref(prob.declare("P", 2).name)
    prob.add_lmi("p_above_identity", p - const(np.eye(2)), ">=0")
    prob.add_lmi("decrease", sy(a.T @ p), "<0")
    program = prob.scalarize()
    outcome = program.solve()
    assert outcome.feasible
    points = [outcome.x, np.random.default_rng(2).normal(size=prob.n_decisions)]
    for x in points:
        for con, block in zip(prob.constraints, program.blocks):
            assert block.name == con.name
            np.testing.assert_allclose(block.evaluate(x), con.expr.evaluate(x), rtol=0, atol=1e-10)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_sum_of_squares_matches_least_squares(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(4, 2)), rng.normal(size=(4, 1))
    prob = LmiProblem("least_squares")
    x1 = prob.ref(prob.declare("x1", 1, kind="scalar").name)
    x2 = prob.ref(prob.declare("x2", 1, kind="scalar").name)
    prob.add_sum_squares("fit", a[:, [0]] @ x1 + a[:, [1]] @ x2 - const(b))
    outcome = prob.solve()
    assert outcome.feasible

    best, *_ = np.linalg.lstsq(a, b, rcond=None)
    optimum = float(np.sum((a @ best - b) ** 2))
    got = np.array([outcome.value("x1"), outcome.value("x2")])
    np.testing.assert_allclose(got, best.ravel(), atol=1e-3)
    assert outcome.objective == pytest.approx(optimum, rel=1e-6, abs=1e-6)


def test_sdpa_dump(tmp_path):
    prob = LmiProblem("dump")
    x = prob.ref(prob.declare("x", 1, kind="scalar").name)
    prob.add_lmi("lower", x - const([[1.0]]), ">=0")
    prob.set_objective(x)
    path = tmp_path / "prog.dat-s"
    write_sdpa(prob.scalarize(), path)
    lines = path.read_text().splitlines()
    assert lines[1] == "1"           # decisions
    assert lines[2] == "1"           # blocks
    assert lines[3] == "1"           # block sizes
    assert any(line.startswith("1 1 1 1 ") for line in lines[5:])
