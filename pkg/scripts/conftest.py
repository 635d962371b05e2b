import os

os.environ.setdefault("DDSS_LOG_DIR", "")

from pathlib import Path

import pytest

from data.problem_loader import load_problem, parse_problem

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = ROOT / "data" / "problems"


def scalar_doc(r1=0.5, r2=0.5, a1=-1.0, b1=0.0, kernel=0.0, d1=0.0, c1=1.0, d2=0.0, gamma="variable"):
    """Scalar system with a constant kernel on whichever segment the regime allows."""
    doc = {
        "name": "scalar",
        "system": {"n": 1, "m": 1, "p": 1, "q": 1, "r1": r1, "r2": r2,
                   "A1": [[a1]], "B1": [[b1]], "D1": [[d1]], "C1": [[c1]], "D2": [[d2]]},
        "supply": {"type": "l2gain", "gamma": gamma},
    }
    if r1 > 0.0:
        doc["basis"] = {"f1": ["1"], "M1": [[0]]}
        doc["kernels"] = {"A2": [[kernel]]}
    else:
        doc["basis"] = {"f2": ["1"], "M2": [[0]]}
        doc["kernels"] = {"A3": [[kernel]]}
    return doc


@pytest.fixture(scope="session")
def open_loop_problem():
    return load_problem(PROBLEMS / "open_loop.yaml")


@pytest.fixture(scope="session")
def controlled_problem():
    return load_problem(PROBLEMS / "controlled.yaml")


@pytest.fixture
def make_scalar():
    def build(**kwargs):
        return parse_problem(scalar_doc(**kwargs))
    return build
