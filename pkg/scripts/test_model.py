import copy

import numpy as np
import pytest
import yaml

from basis.kernel_basis import compute_geometry
from data.problem_loader import load_problem, parse_problem
from models.bold_matrices import assemble_bold
from models.supply_rate import supply_custom, supply_l2, supply_passivity
from regimes.delay_regime import RegimeKind, classify_regime
from utils.errors import (
    DimensionMismatch,
    InvalidDelayBounds,
    NonPositiveGamma,
    NotNegativeDefinite,
    ProblemFileError,
)

from conftest import PROBLEMS, scalar_doc


# ----- regimes -----

def test_regime_classification():
    interior = classify_regime(0.5, 1.0)
    assert interior.kind == RegimeKind.INTERIOR and interior.three_hat == 3

    lower = classify_regime(0.0, 1.0)
    assert lower.kind == RegimeKind.LOWER_ZERO and lower.three_hat == 2
    assert lower.one_hat_marker(2).shape == (0, 2)

    point = classify_regime(1.0, 1.0)
    assert point.kind == RegimeKind.POINT and point.three_hat == 2
    assert point.one_marker(2).shape == (0, 2)


@pytest.mark.parametrize("r1,r2", [(0.5, 0.0), (-0.1, 1.0), (1.2, 1.0)])
def test_invalid_delay_bounds(r1, r2):
    with pytest.raises(InvalidDelayBounds):
        classify_regime(r1, r2)


# ----- bold matrices -----

def _bold(system):
    return assemble_bold(system, compute_geometry(system.basis1), compute_geometry(system.basis2))


def test_open_loop_bold_dimensions(open_loop_problem):
    bold = _bold(open_loop_problem.system)
    assert bold.layout.length == 3 * 2 + 21 * 2 + 1
    assert bold.bold_a.shape == (2, 49)
    assert bold.bold_c.shape == (2, 49)
    assert not np.any(bold.bold_b1)
    assert not np.any(bold.bold_b2)
    assert bold.i_hat.shape == (8, 21)


def test_point_regime_drops_second_segment(make_scalar):
    system = make_scalar(r1=0.5, r2=0.5, kernel=-0.3).system
    bold = _bold(system)
    assert system.kappa2 == 0
    # x(t - r1), x(t), xi1, w
    assert bold.layout.length == 1 + 1 + 1 + 1
    assert bold.layout.size("xi2") == 0 and bold.layout.size("xi3") == 0


@pytest.mark.parametrize("r1,r2", [(0.5, 0.5), (0.0, 0.5)])
def test_degenerate_regime_folds_the_interior_form(make_scalar, r1, r2):
    system = make_scalar(r1=r1, r2=r2, kernel=-0.3).system
    bold = _bold(system)
    lay = bold.layout
    names = ["x_r1", "x_r2", "x_t"]
    absent = [i for i, nm in enumerate(names) if not lay.size(nm)]
    assert len(absent) == 1
    merged = bold.f_hat_logical.copy()
    for i in absent:
        merged[:, names.index(lay.target(names[i]))] += merged[:, i]
    np.testing.assert_allclose(np.delete(merged, absent, axis=1), bold.f_hat, atol=1e-14)
    if r1 == r2:
        # x(t - r2) coincides with x(t - r1): its stripe is empty in the interior form
        assert not np.any(bold.f_hat_logical[:, 1])
        np.testing.assert_array_equal(np.delete(bold.f_hat_logical, 1, axis=1), bold.f_hat)
    assert bold.bold_a.shape == (1, lay.length)
    assert bold.bold_a[0, lay.offset("x_t")] == pytest.approx(-1.0)


def test_f_hat_row_of_constant_basis():
    doc = scalar_doc(r1=1.0, r2=1.0)
    doc["basis"] = {"f1": ["1"], "phi1": ["t"], "M1": [[0, 0]]}
    doc["kernels"] = {}
    bold = _bold(parse_problem(doc).system)
    row = bold.f_hat_logical[0]
    assert row[0] == pytest.approx(-1.0)     # x(t - r1)
    assert row[2] == pytest.approx(1.0)      # x(t)


def test_fold_maps_logical_slots(make_scalar):
    lay = make_scalar(r1=0.0, r2=0.5).system.chi_layout()
    fold = lay.fold()
    assert fold.shape == (lay.logical_length, lay.length)
    # x(t - r1) is x(t) when r1 = 0
    np.testing.assert_array_equal(fold[lay.logical_slice("x_r1")], fold[lay.logical_slice("x_t")])


# ----- supply rates -----

def test_supply_l2():
    s = supply_l2(0.5, 2, 1)
    np.testing.assert_array_equal(s.j1, -0.5 * np.eye(2))
    np.testing.assert_array_equal(s.j3, [[0.5]])
    assert supply_l2("variable", 2, 1).gamma_mode
    with pytest.raises(NonPositiveGamma):
        supply_l2(-1.0, 2, 1)


def test_supply_value_of_l2_preset():
    s = supply_l2(2.0, 1, 1)
    # z'(-1/gamma)z + gamma w'w
    np.testing.assert_allclose(s.value([[1.0]], [[1.0]]), [-0.5 + 2.0])


def test_supply_passivity():
    s = supply_passivity(-np.eye(2), 2, 2)
    np.testing.assert_array_equal(s.j2, np.eye(2))
    with pytest.raises(DimensionMismatch):
        supply_passivity(-np.eye(2), 2, 1)
    with pytest.raises(NotNegativeDefinite):
        supply_passivity(np.eye(2), 2, 2)


def test_supply_custom_shapes():
    with pytest.raises(DimensionMismatch):
        supply_custom(-np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(1), 2, 1)


# ----- delay systems -----

def test_with_delays_moves_basis_intervals(open_loop_problem):
    moved = open_loop_problem.system.with_delays(1.0, 1.27)
    assert moved.basis1.interval == (-1.0, 0.0)
    assert moved.basis2.interval == (-1.27, -1.0)
    assert moved.r3 == pytest.approx(0.27)


def test_closed_loop_coefficients(controlled_problem):
    system = controlled_problem.system
    k = np.array([[0.5, -2.0]])
    coeffs = system.closed_loop_coefficients(k)
    np.testing.assert_allclose(coeffs["a0"], system.a1 + system.b1 @ k)
    taus = np.linspace(-0.5, 0.0, 5)
    ker = system.kernel_values(coeffs["a_seg1"], 1, taus, system.n)
    assert ker.shape == (5, 2, 2)


def test_has_input(open_loop_problem, controlled_problem):
    assert not open_loop_problem.system.has_input
    assert controlled_problem.system.has_input


# ----- problem files -----

@pytest.mark.parametrize("name", ["open_loop", "controlled", "toy_point", "toy_lower_zero"])
def test_shipped_problems_validate(name):
    problem = load_problem(PROBLEMS / f"{name}.yaml")
    assert problem.system.validate()["passed"]


def test_controlled_problem_fields(controlled_problem):
    assert controlled_problem.alg1.alphas == {3: 0.5}
    assert controlled_problem.sim.disturbance_window == (0.0, 5.0)
    assert controlled_problem.supply.gamma_mode


def _doc(name):
    with open(PROBLEMS / f"{name}.yaml") as fh:
        return yaml.safe_load(fh)


def test_shape_error_names_section_and_key():
    doc = _doc("open_loop")
    doc["kernels"]["A2"] = doc["kernels"]["A2"][:1]
    with pytest.raises(ProblemFileError) as err:
        parse_problem(doc)
    assert err.value.path == "kernels.A2"


def test_unknown_section_rejected():
    doc = _doc("toy_point")
    doc["extras"] = {}
    with pytest.raises(ProblemFileError):
        parse_problem(doc)


def test_zeroed_closure_row_fails_validation():
    doc = copy.deepcopy(_doc("open_loop"))
    doc["basis"]["M1"][1] = [0] * 7
    report = parse_problem(doc).system.validate()
    assert not report["passed"]
    failed = [c for c in report["checks"] if not c["passed"]]
    assert failed[0]["check"] == "ode_closure" and failed[0]["target"] == "basis1"


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_problem(tmp_path / "absent.yaml")
