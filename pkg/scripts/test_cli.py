import json

import numpy as np
import pytest

from main import (
    EXIT_FAILED,
    EXIT_INPUT,
    EXIT_OK,
    parse_alphas,
    parse_gain,
    parse_intervals,
    parse_range,
    run,
)
from utils.errors import DimensionMismatch

from conftest import PROBLEMS


# ----- argument helpers -----

def test_parse_gain():
    np.testing.assert_array_equal(parse_gain("0.5,-2", 1, 2), [[0.5, -2.0]])
    np.testing.assert_array_equal(parse_gain("1,0;0,1", 2, 2), np.eye(2))
    with pytest.raises(DimensionMismatch):
        parse_gain("1,2,3", 1, 2)
    with pytest.raises(ValueError):
        parse_gain("a,b", 1, 2)


def test_parse_alphas_intervals_and_range():
    assert parse_alphas(["3=0.5", "1=-1"]) == {3: 0.5, 1: -1.0}
    assert parse_alphas(None) == {}
    with pytest.raises(ValueError):
        parse_alphas(["3"])
    assert parse_intervals("0.98:1.25,1:1.23") == [(0.98, 1.25), (1.0, 1.23)]
    np.testing.assert_allclose(parse_range("0.5:1.0:0.25"), [0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        parse_range("1:0:0.1")


# ----- exit codes -----

@pytest.mark.parametrize("name", ["open_loop", "controlled", "toy_point", "toy_lower_zero"])
def test_validate_shipped_problem(tmp_path, name):
    out = tmp_path / "report.json"
    assert run(["validate", str(PROBLEMS / f"{name}.yaml"), "--json", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["passed"]
    assert any(c["check"] == "gram_spd" for c in report["checks"])


def test_missing_file_is_an_input_error(tmp_path):
    assert run(["validate", str(tmp_path / "absent.yaml")]) == EXIT_INPUT


def test_malformed_problem_is_an_input_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("name: bad\nsystem:\n  n: 1\n")
    assert run(["validate", str(path)]) == EXIT_INPUT


def test_bad_gain_is_an_input_error():
    assert run(["spectrum", str(PROBLEMS / "toy_point.yaml"), "--k", "1,2"]) == EXIT_INPUT


def test_synthesis_without_input_is_an_input_error():
    assert run(["synthesize", str(PROBLEMS / "open_loop.yaml")]) == EXIT_INPUT


def test_check_without_file(tmp_path):
    out = tmp_path / "check.json"
    assert run(["check", "--trials", "20", "--seed", "3", "--json", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["trials"] == 20 and report["seed"] == 3


def test_check_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DDSS_SEED", "11")
    out = tmp_path / "check.json"
    assert run(["check", "--trials", "5", "--json", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["seed"] == 11


@pytest.mark.slow
def test_spectrum_of_open_loop(tmp_path):
    out = tmp_path / "spectrum.json"
    assert run(["spectrum", str(PROBLEMS / "open_loop.yaml"), "--r", "1.0", "--json", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["stable"] and report["abscissa"] < 0.0


def test_spectrum_of_unstable_toy_loop():
    assert run(["spectrum", str(PROBLEMS / "toy_point.yaml")]) == EXIT_FAILED


def test_analyze_writes_certificate(tmp_path):
    cert_path = tmp_path / "cert.json"
    csv_path = tmp_path / "row.csv"
    args = ["analyze", str(PROBLEMS / "toy_point.yaml"), "--k", "-2", "--json", str(cert_path), "--csv", str(csv_path)]
    assert run(args) == EXIT_OK
    assert "certificate" in json.loads(cert_path.read_text())
    assert csv_path.read_text().splitlines()[0].startswith("r1,r2,r3,status,gamma")


def test_simulate_from_synthesis(tmp_path):
    sol_path = tmp_path / "sol.json"
    traj_path = tmp_path / "traj.csv"
    assert run(["synthesize", str(PROBLEMS / "toy_point.yaml"), "--json", str(sol_path)]) == EXIT_OK
    args = ["simulate", str(PROBLEMS / "toy_point.yaml"), "--from-synthesis", str(sol_path),
            "--t-end", "1.0", "--out", str(traj_path), "--json", str(tmp_path / "sim.json")]
    assert run(args) == EXIT_OK
    assert traj_path.exists()


def test_iterate_writes_trace_and_certificate(tmp_path):
    csv_path = tmp_path / "trace.csv"
    cert_path = tmp_path / "cert.json"
    args = ["iterate", str(PROBLEMS / "toy_point.yaml"), "--iters", "2", "--csv", str(csv_path), "--json", str(cert_path)]
    assert run(args) == EXIT_OK
    header = csv_path.read_text().splitlines()[0]
    assert header.startswith("iteration,gamma,rel_change")
    assert "k1" in header
    assert "certificate" in json.loads(cert_path.read_text())


@pytest.mark.slow
def test_infeasible_interval_exits_with_failure(capsys):
    args = ["analyze", str(PROBLEMS / "open_loop.yaml"), "--min-gamma", "--r1", "1.6", "--r2", "2.5"]
    assert run(args) == EXIT_FAILED
    assert "infeasible" in capsys.readouterr().out
