# tests/test_solver.py

import sys
import unittest
from unittest import mock

import numpy as np
import pytest

from ceropt.config import load_config
from ceropt.constants import STATE_DIM
from ceropt.modes import ClutchPattern, ModeSchedule, constraint_jacobian
from ceropt.plant import PlantParams, ee_speed_squared, eval_model
from ceropt.simulator import constraint_torque, node_deviation, rollout
from ceropt.solver import (
    BackendResult,
    DenseNLP,
    InteriorPointBackend,
    NlpSolution,
    SolveStatus,
    SolverError,
    make_backend,
    solve_homotopy,
    solve_relaxed,
    validate_eps_schedule,
)
from ceropt.transcription import TranscriptionConfig, build_problem


# ---------------------------
# Hock-Schittkowski problems
# ---------------------------
def hs071():
    def f(x):
        return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]

    def c(x):
        return np.stack([x[0] * x[1] * x[2] * x[3], x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2])

    return DenseNLP(
        f, [1.0, 5.0, 5.0, 1.0], c,
        x_lower=np.ones(4), x_upper=np.full(4, 5.0),
        c_lower=[25.0, 40.0], c_upper=[np.inf, 40.0],
    )


def hs021():
    def f(x):
        return 0.01 * x[0] ** 2 + x[1] ** 2 - 100.0

    def c(x):
        return np.stack([10.0 * x[0] - x[1]])

    return DenseNLP(
        f, [-1.0, -1.0], c,
        x_lower=[2.0, -50.0], x_upper=[50.0, 50.0],
        c_lower=[10.0], c_upper=[np.inf],
    )


def hs035():
    def f(x):
        return (9.0 - 8.0 * x[0] - 6.0 * x[1] - 4.0 * x[2] + 2.0 * x[0] ** 2 + 2.0 * x[1] ** 2
                + x[2] ** 2 + 2.0 * x[0] * x[1] + 2.0 * x[0] * x[2])

    def c(x):
        return np.stack([x[0] + x[1] + 2.0 * x[2]])

    return DenseNLP(
        f, [0.5, 0.5, 0.5], c,
        x_lower=np.zeros(3),
        c_lower=[-np.inf], c_upper=[3.0],
    )


# ---------------------------
# Tests
# ---------------------------
class TestInteriorPoint(unittest.TestCase):

    def setUp(self):
        self.backend = InteriorPointBackend()

    def test_hs071(self):
        problem = hs071()
        result = self.backend.solve(problem, problem.x0)
        self.assertEqual(result.status, SolveStatus.CONVERGED)
        self.assertAlmostEqual(result.solution.objective, 17.0140173, places=5)
        np.testing.assert_allclose(result.solution.z, [1.0, 4.74299963, 3.82114998, 1.37940829], atol=1e-5)

    def test_hs021(self):
        problem = hs021()
        result = self.backend.solve(problem, problem.x0)
        self.assertEqual(result.status, SolveStatus.CONVERGED)
        self.assertAlmostEqual(result.solution.objective, -99.96, places=4)
        np.testing.assert_allclose(result.solution.z, [2.0, 0.0], atol=1e-4)

    def test_hs035(self):
        problem = hs035()
        result = self.backend.solve(problem, problem.x0)
        self.assertEqual(result.status, SolveStatus.CONVERGED)
        self.assertAlmostEqual(result.solution.objective, 1.0 / 9.0, places=6)
        np.testing.assert_allclose(result.solution.z, [4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0], atol=1e-5)

    def test_multipliers_satisfy_stationarity(self):
        problem = hs071()
        sol = self.backend.solve(problem, problem.x0).solution
        # L = f + y . c, bound multipliers enter with opposite signs
        residual = (problem.gradient(sol.z) + problem.jacobian(sol.z).T @ sol.multipliers
                    - sol.bound_lower + sol.bound_upper)
        self.assertLess(np.max(np.abs(residual)), 1e-5)

    def test_warm_start_needs_fewer_iterations(self):
        problem = hs071()
        cold = self.backend.solve(problem, problem.x0)
        warm = self.backend.solve(problem, cold.solution.z, warm_start=cold.solution)
        self.assertEqual(warm.status, SolveStatus.CONVERGED)
        self.assertLessEqual(warm.iterations, cold.iterations)
        self.assertAlmostEqual(warm.solution.objective, cold.solution.objective, places=6)

    def test_infeasible_problem_does_not_converge(self):
        problem = DenseNLP(lambda x: x[0] ** 2, [-1.0], lambda x: np.stack([x[0]]),
                           x_upper=[0.0], c_lower=[1.0], c_upper=[np.inf])
        result = InteriorPointBackend(max_iter=50).solve(problem, problem.x0)
        self.assertNotEqual(result.status, SolveStatus.CONVERGED)

    def test_inconsistent_bounds_raise(self):
        problem = DenseNLP(lambda x: x[0] ** 2, [0.0], x_lower=[1.0], x_upper=[0.0])
        with self.assertRaises(SolverError):
            self.backend.solve(problem, problem.x0)
        with self.assertRaises(SolverError):
            self.backend.solve(hs071(), np.zeros(3))


def test_minimum_norm_point_of_an_affine_set():
    A = np.array([[1.0, 2.0, 0.0, -1.0], [0.0, 1.0, 3.0, 1.0]])
    b = np.array([1.0, -2.0])
    problem = DenseNLP(lambda z: np.sum(z * z), np.zeros(4), lambda z: A @ z, c_lower=b, c_upper=b)
    result = InteriorPointBackend(tol=1e-10, feas_tol=1e-12).solve(problem, problem.x0)
    assert result.status == SolveStatus.CONVERGED
    expected = A.T @ np.linalg.solve(A @ A.T, b)
    np.testing.assert_allclose(result.solution.z, expected, atol=1e-8)


def test_unknown_backend():
    with pytest.raises(SolverError, match="unknown solver backend"):
        make_backend({"backend": "snopt"})
    assert isinstance(make_backend({"max_iter": 10}), InteriorPointBackend)


def test_ipopt_backend_without_cyipopt():
    with mock.patch.dict(sys.modules, {"cyipopt": None}):
        with pytest.raises(SolverError, match="cyipopt"):
            make_backend({"backend": "ipopt"})


def test_ipopt_backend_solves_hs071():
    pytest.importorskip("cyipopt")
    problem = hs071()
    result = make_backend({"backend": "ipopt"}).solve(problem, problem.x0)
    assert result.status == SolveStatus.CONVERGED
    assert result.solution.objective == pytest.approx(17.0140173, rel=1e-6)


@pytest.mark.parametrize("schedule", [[], [1e-2, 1e-1], [1e-1, 1e-1], [1e-1, 0.0], [float("nan")]])
def test_invalid_eps_schedules(schedule):
    with pytest.raises(ValueError):
        validate_eps_schedule(schedule)


def test_relaxed_solve_requires_positive_eps():
    with pytest.raises(ValueError):
        solve_relaxed(hs071(), 0.0)


def test_homotopy_chains_stages():
    solution, report = solve_homotopy(hs071(), [1e-1, 1e-2, 1e-3], progress=False)
    assert report.converged
    assert report.eps_trace == [1e-1, 1e-2, 1e-3]
    assert report.final_epsilon == 1e-3
    assert len(report.stages) == 3
    assert solution.objective == pytest.approx(17.0140173, rel=1e-6)
    payload = report.to_dict()
    assert payload["status"] == "converged"
    assert len(payload["iterations"]) == 3


def test_homotopy_returns_last_converged_stage_on_failure():
    problem = hs071()
    first = NlpSolution(
        z=np.array([1.0, 4.743, 3.821, 1.379]), multipliers=np.zeros(2),
        bound_lower=np.zeros(4), bound_upper=np.zeros(4),
        row_lower=np.zeros(2), row_upper=np.zeros(2), objective=17.0,
    )
    second = NlpSolution(**{**first.__dict__, "z": np.full(4, 3.0), "objective": 99.0})
    backend = mock.Mock()
    backend.solve.side_effect = [
        BackendResult(first, SolveStatus.CONVERGED, 12),
        BackendResult(second, SolveStatus.MAX_ITER, 500, "reached max_iter=500"),
    ]

    solution, report = solve_homotopy(problem, [1e-1, 1e-2, 1e-3], backend=backend, progress=False)

    assert backend.solve.call_count == 2
    # the failing stage is warm-started from the converged one
    assert backend.solve.call_args_list[1].args[2] is first
    assert report.status == SolveStatus.MAX_ITER
    assert not report.converged
    assert report.final_epsilon == 1e-1
    assert report.eps_trace == [1e-1, 1e-2]
    assert "returning eps=0.1" in report.message
    np.testing.assert_allclose(solution.z, first.z)


# ---------------------------
# Transcribed problems
# ---------------------------
def final_ee_speed(params, traj):
    x = traj.xs[-1]
    return float(np.sqrt(ee_speed_squared(params, x[4:6], x[8:10])))


@pytest.fixture(scope="module")
def solved():
    out = {}
    for scenario in ("guessed", "speed-max-T0.5"):
        config = load_config(scenario=scenario)
        problem = build_problem(config.plant, config.transcription, config.schedule)
        solution, report = solve_homotopy(problem, options=config.solver, seed=config.seed, progress=False)
        out[scenario] = (config, problem, solution, report)
    return out


@pytest.mark.slow
def test_brake_torque_equals_the_constraint_torque():
    params = PlantParams.default()
    x0 = np.zeros(STATE_DIM)
    x0[0] = 0.1  # loaded spring on joint 1
    pattern = ClutchPattern.from_modes(("STG", "DEC"))
    cfg = TranscriptionConfig(n=3, T=0.03, x0=x0)
    problem = build_problem(params, cfg, ModeSchedule.constant(pattern, 0.03))
    solution, report = solve_homotopy(problem, progress=False)
    assert report.converged

    traj = problem.unpack(solution.z)
    C = constraint_jacobian(pattern)
    for x, zeta in zip(traj.xs[1:], traj.zetas):
        lam = constraint_torque(eval_model(params, x), C)
        np.testing.assert_allclose(zeta[0], lam[0], rtol=1e-6, atol=1e-5)
        np.testing.assert_allclose(zeta[1:], 0.0, atol=1e-10)
    assert traj.zetas[0, 0] < 0.0


@pytest.mark.slow
def test_optimized_sequence_is_faster_than_the_guessed_one(solved):
    speeds = {}
    for scenario, (config, problem, solution, report) in solved.items():
        assert report.converged
        speeds[scenario] = final_ee_speed(config.plant, problem.unpack(solution.z))
    assert speeds["speed-max-T0.5"] >= 1.1 * speeds["guessed"]


@pytest.mark.slow
def test_optimized_solution_is_complementary_and_consistent(solved):
    _, problem, solution, report = solved["speed-max-T0.5"]
    assert report.final_epsilon == pytest.approx(1e-6)
    assert problem.max_complementarity(solution.z) <= 1e-6
    assert problem.max_defect(solution.z) <= 1e-8


@pytest.mark.slow
def test_optimized_motion_swings_back_then_whips(solved):
    _, problem, solution, _ = solved["speed-max-T0.5"]
    traj = problem.unpack(solution.z)
    dq1, dq2 = traj.xs[:, 8], traj.xs[:, 9]

    # countermovement: the shoulder first turns against its final direction
    peak = int(np.argmax(np.abs(dq1)))
    final_sign = np.sign(dq1[peak])
    early = dq1[1:peak]
    assert np.any((np.sign(early) == -final_sign) & (np.abs(early) > 1e-3))
    # proximal link peaks before the distal one
    assert traj.times[peak] < traj.times[int(np.argmax(np.abs(dq2)))]


@pytest.mark.slow
def test_optimized_controls_replay_in_the_simulator(solved):
    config, problem, solution, _ = solved["speed-max-T0.5"]
    traj = problem.unpack(solution.z)
    schedule = problem.extract_schedule(solution.z)
    result = rollout(config.plant, config.transcription.x0, traj.us, schedule, sample_dt=problem.delta)
    assert problem.delta == pytest.approx(0.005)
    assert node_deviation(result, traj.times, traj.xs) <= 0.05


@pytest.mark.slow
def test_optimized_switch_times(solved):
    _, problem, solution, _ = solved["speed-max-T0.5"]
    switch_times = np.array(problem.extract_schedule(solution.z).switch_times)
    for expected in (0.11, 0.14, 0.27, 0.41):
        assert np.min(np.abs(switch_times - expected)) <= 2 * problem.delta
