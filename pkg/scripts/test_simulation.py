import math
from dataclasses import replace

import numpy as np
import pytest

from analysis.functional import FunctionalEvaluator
from data.problem_loader import load_problem
from simulation.engine import (
    SimConfig,
    disturbance_function,
    empirical_supply_check,
    kernel_quadrature,
    simulate,
    trapezoid_weights,
)
from simulation.history import HistoryBuffer
from simulation.trajectory import Trajectory
from synthesis.theorem1 import analyze
from synthesis.theorem2 import synthesize_thm2
from utils.errors import DelayOutOfBounds, DimensionError

from conftest import PROBLEMS

PUBLISHED_GAIN = [[0.6505, -2.6021]]


# ----- kernel quadrature -----

def _ones(times):
    return np.ones((np.size(times), 1))


def test_quadrature_of_constant_kernel_over_full_window():
    got = kernel_quadrature(np.ones(11), 1.3, _ones, 0.0, nodes=10, r2=1.3)
    assert got[0] == pytest.approx(1.3, rel=1e-14)


def test_quadrature_of_linear_history():
    got = kernel_quadrature(lambda taus: np.ones_like(taus), 1.0, lambda s: np.reshape(s, (-1, 1)),
                            0.0, nodes=10000, r2=1.0)
    assert got[0] == pytest.approx(-0.5, abs=1e-6)


def test_quadrature_of_truncated_window():
    r2, nodes = 2.0, 10
    got = kernel_quadrature(np.ones(nodes + 1), r2 / 2, _ones, 0.0, nodes=nodes, r2=r2)
    assert abs(got[0] - r2 / 2) <= r2 / nodes


def test_trapezoid_weights_zero_below_delay():
    w = trapezoid_weights(0.5, 1.0, 4)
    np.testing.assert_allclose(w, [0.0, 0.0, 0.25, 0.25, 0.125])


def test_delay_outside_bounds_is_rejected():
    with pytest.raises(DelayOutOfBounds):
        kernel_quadrature(np.ones(3), 1.5, _ones, 0.0, nodes=2, r2=1.0)
    with pytest.raises(DelayOutOfBounds):
        kernel_quadrature(np.ones(3), 0.2, _ones, 0.0, nodes=2, r2=1.0, r1=0.5)


# ----- history and signals -----

def test_history_buffer_interpolates_and_uses_initial_function():
    buf = HistoryBuffer(1, 0.1, 1.0, initial=lambda theta: np.reshape(10.0 + theta, (-1, 1)))
    for x in (0.0, 1.0, 2.0):
        buf.push([x])
    np.testing.assert_allclose(buf.lookup([0.15, 0.2]), [[1.5], [2.0]])
    np.testing.assert_allclose(buf.lookup([-0.5]), [[9.5]])
    with pytest.raises(DelayOutOfBounds):
        buf.lookup([0.35])


def test_history_buffer_forgets_old_samples():
    buf = HistoryBuffer(1, 0.5, 1.0)
    for x in range(10):
        buf.push([float(x)])
    assert buf.lookup([4.5])[0, 0] == pytest.approx(9.0)
    with pytest.raises(DelayOutOfBounds):
        buf.lookup([1.0])


def test_disturbance_window_is_right_open():
    cfg = SimConfig(t_end=10.0, disturbance_exprs=["50*sin(10*t)"], disturbance_window=(0.0, 5.0))
    w = disturbance_function(cfg, 1)
    assert w(math.pi / 20)[0] == pytest.approx(50.0)
    assert w(5.0)[0] == 0.0
    assert w(4.99)[0] == pytest.approx(50.0 * math.sin(49.9))
    with pytest.raises(DimensionError):
        disturbance_function(cfg, 2)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(t_end=1.0, dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(t_end=0.0)
    with pytest.raises(ValueError):
        SimConfig(t_end=1.0, disturbance_window=(2.0, 1.0))


def test_trajectory_freeze_and_export():
    traj = Trajectory(n=1, p=1, m=1, q=1, dt=0.1)
    traj.append(0.0, [1.0], [0.0], [1.0], [0.0], 0.5)
    traj.append(0.1, [0.5], [0.0], [0.5], [0.0], 0.5)
    traj.freeze()
    with pytest.raises(RuntimeError):
        traj.append(0.2, [0.0], [0.0], [0.0], [0.0], 0.5)
    df = traj.to_df()
    assert list(df.columns) == ["t", "x1", "u1", "z1", "w1", "r"]
    np.testing.assert_allclose(traj.state_at([0.05]), [[0.75]])
    assert traj.stats()["decay_ratio"] == pytest.approx(0.5)


# ----- simulation -----

def test_exponential_decay_without_kernels(make_scalar):
    system = make_scalar(a1=-1.0).system
    cfg = SimConfig(t_end=1.0, dt=1e-3, kernel_nodes=10, delay_expr=0.5, history_exprs=["1"])
    traj = simulate(system, None, cfg)
    assert traj.t[-1] == pytest.approx(1.0)
    assert traj.x[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_simulation_stops_on_bad_delay(make_scalar):
    system = make_scalar(a1=-1.0).system
    cfg = SimConfig(t_end=1.0, dt=1e-2, kernel_nodes=10, delay_expr=1.5, history_exprs=["1"])
    with pytest.raises(DelayOutOfBounds):
        simulate(system, None, cfg)


def test_history_expression_count_must_match_state(controlled_problem):
    cfg = replace(controlled_problem.sim, t_end=0.01, history_exprs=["1"])
    with pytest.raises(DimensionError):
        simulate(controlled_problem.system, PUBLISHED_GAIN, cfg)


def test_trajectory_csv(tmp_path, make_scalar):
    system = make_scalar(a1=-1.0).system
    cfg = SimConfig(t_end=0.1, dt=1e-2, kernel_nodes=10, delay_expr=0.5, history_exprs=["1"], record_every=5)
    traj = simulate(system, None, cfg)
    path = tmp_path / "traj.csv"
    traj.save_csv(path)
    assert path.read_text().splitlines()[0] == "t,x1,u1,z1,w1,r"
    assert len(traj) == 3


@pytest.mark.slow
def test_synthesized_toy_loop_decays_and_dissipates():
    problem = load_problem(PROBLEMS / "toy_point.yaml")
    k = synthesize_thm2(problem.system, problem.supply, problem.alg1.alphas).k
    traj = simulate(problem.system, k, problem.sim)
    stats = traj.stats()
    assert stats["final_norm"] < stats["peak_norm"]
    cert = analyze(problem.system, problem.supply, k)
    ev = FunctionalEvaluator.build(problem.system, cert)
    report = empirical_supply_check(traj, problem.supply, ev, cert.gamma)
    assert report["passed"]
    assert report["v_end"] < report["v_start"]


@pytest.mark.slow
def test_published_gain_settles_controlled_system(controlled_problem):
    traj = simulate(controlled_problem.system, PUBLISHED_GAIN, controlled_problem.sim)
    stats = traj.stats()
    assert stats["t_end"] == pytest.approx(20.0)
    assert stats["final_norm"] < 0.01 * stats["peak_norm"]

    cert = analyze(controlled_problem.system, controlled_problem.supply, PUBLISHED_GAIN)
    ev = FunctionalEvaluator.build(controlled_problem.system, cert)
    assert empirical_supply_check(traj, controlled_problem.supply, ev, cert.gamma)["passed"]


def test_trajectory_figures(tmp_path, make_scalar):
    import matplotlib
    matplotlib.use("Agg")
    from analysis.plot_trajectory import plot_trajectory

    system = make_scalar(a1=-1.0).system
    cfg = SimConfig(t_end=0.1, dt=1e-2, kernel_nodes=10, delay_expr=0.5, history_exprs=["1"])
    csv = tmp_path / "traj.csv"
    simulate(system, None, cfg).save_csv(csv)
    saved = plot_trajectory(csv, tmp_path / "figures", window=(0.0, 0.05))
    assert [p.name for p in saved] == ["traj_x.png", "traj_z.png", "traj_u.png"]
    assert all(p.exists() for p in saved)
