# tests/test_cli.py

import logging
import os
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from ceropt import artifacts, cli
from ceropt.checks import CheckResult
from ceropt.lqr import RiccatiDivergenceError
from ceropt.modes import ClutchPattern, ModeSchedule
from ceropt.plant import ModelInputError
from ceropt.solver import SolverError

HASH = "0" * 64


# ---------------------------
# Helper function
# ---------------------------
def write_reference(directory, horizon=0.01, n=2):
    """Controls and schedule files shaped like `ceropt optimize` output for the smoke scenario."""
    schedule = ModeSchedule(
        (horizon / 2,),
        (ClutchPattern.from_modes(("SEA", "STG")), ClutchPattern.from_modes(("DEC", "SEA"))),
        horizon,
    )
    dt = horizon / n
    controls = pd.DataFrame({"t": dt * np.arange(n), "u1": np.full(n, 1.0), "u2": np.full(n, 0.5)})
    artifacts.write_schedule(os.path.join(directory, artifacts.SCHEDULE_FILE), schedule, HASH, 0)
    artifacts.write_csv(os.path.join(directory, artifacts.CONTROLS_FILE), controls, HASH, 0, "controls")
    return schedule


# ---------------------------
# Tests
# ---------------------------
def test_optimize_smoke_scenario_writes_every_artifact(tmp_path):
    out = str(tmp_path)
    code = cli.main(["optimize", "--scenario", "smoke", "--out", out, "--seed", "1"])
    assert code in (cli.EXIT_OK, cli.EXIT_FAILURE)

    for name in [
        artifacts.CONFIG_FILE, artifacts.SOLUTION_FILE, artifacts.TRAJECTORY_FILE, artifacts.CONTROLS_FILE,
        artifacts.CLUTCH_FILE, artifacts.SCHEDULE_FILE, artifacts.REPORT_FILE,
    ]:
        assert os.path.exists(os.path.join(out, name)), name

    report = artifacts.read_json(os.path.join(out, artifacts.REPORT_FILE))
    assert report["partial"] is (code == cli.EXIT_FAILURE)
    assert report["seed"] == 1
    assert report["eps_trace"][0] == 0.1

    trajectory, meta = artifacts.read_csv(os.path.join(out, artifacts.TRAJECTORY_FILE))
    assert len(trajectory) == 3
    assert meta["config_hash"] == report["config_hash"]
    assert artifacts.read_controls(os.path.join(out, artifacts.CONTROLS_FILE)).shape == (2, 2)

    # the schedule can be re-extracted from the stored trajectory
    code = cli.main(["extract-modes", "--scenario", "smoke", "--out", out,
                     "--trajectory", os.path.join(out, artifacts.TRAJECTORY_FILE)])
    assert code == cli.EXIT_OK
    assert artifacts.read_schedule(os.path.join(out, artifacts.SCHEDULE_FILE)).horizon == pytest.approx(0.01)


def test_simulate_writes_a_rollout(tmp_path, capsys):
    out = str(tmp_path)
    write_reference(out)
    code = cli.main([
        "simulate", "--scenario", "smoke", "--out", out,
        "--schedule", os.path.join(out, artifacts.SCHEDULE_FILE),
        "--controls", os.path.join(out, artifacts.CONTROLS_FILE),
    ])
    assert code == cli.EXIT_OK
    rollout, meta = artifacts.read_csv(os.path.join(out, artifacts.ROLLOUT_FILE))
    assert meta["kind"] == "rollout"
    assert rollout["t"].iloc[-1] == pytest.approx(0.01)
    assert set(rollout["mode_j1"]) == {"SEA", "DEC"}
    assert "1 switches" in capsys.readouterr().out


def test_track_writes_gains_and_summary(tmp_path):
    out = str(tmp_path)
    write_reference(out)
    code = cli.main(["track", "--scenario", "smoke", "--out", out])
    assert code == cli.EXIT_OK

    summary = artifacts.read_json(os.path.join(out, artifacts.TRACKING_SUMMARY_FILE))
    assert summary["perturbation"] == {"q1": 0.05}
    assert summary["max_error"] >= 0.0
    gains = artifacts.read_gains(os.path.join(out, artifacts.GAINS_FILE))
    assert gains.n_intervals == 2
    tracking, _ = artifacts.read_csv(os.path.join(out, artifacts.TRACKING_FILE))
    assert {"u1", "u_ref1", "error", "open_loop_error"} <= set(tracking.columns)


def test_config_errors_exit_with_2(tmp_path):
    assert cli.main(["check", "--config", str(tmp_path / "absent.json")]) == cli.EXIT_CONFIG
    assert cli.main(["optimize", "--scenario", "fastest", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["track", "--scenario", "smoke", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_bad_artifacts_exit_with_2(tmp_path):
    bad = tmp_path / "controls.csv"
    bad.write_text("# ceropt-csv v9 config_hash=x seed=0 kind=controls\nt,u1,u2\n0,0,0\n")
    code = cli.main(["simulate", "--scenario", "smoke", "--out", str(tmp_path), "--controls", str(bad)])
    assert code == cli.EXIT_CONFIG

    trajectory = tmp_path / "trajectory.csv"
    artifacts.write_csv(str(trajectory), pd.DataFrame({"t": [0.0, 0.005]}), HASH, 0, "trajectory")
    code = cli.main(["extract-modes", "--scenario", "smoke", "--out", str(tmp_path), "--trajectory", str(trajectory)])
    assert code == cli.EXIT_CONFIG


def test_unknown_backend_exits_with_2(tmp_path):
    config = tmp_path / "config.json"
    config.write_text('{"scenario": "smoke", "solver": {"backend": "snopt"}}')
    code = cli.main(["optimize", "--config", str(config), "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG


def test_controls_of_the_wrong_length_exit_with_2(tmp_path, capsys):
    out = str(tmp_path)
    write_reference(out, n=3)
    code = cli.main([
        "simulate", "--scenario", "smoke", "--out", out,
        "--schedule", os.path.join(out, artifacts.SCHEDULE_FILE),
        "--controls", os.path.join(out, artifacts.CONTROLS_FILE),
    ])
    assert code == cli.EXIT_CONFIG
    assert "expected 2" in capsys.readouterr().err
    assert cli.main(["track", "--scenario", "smoke", "--out", out]) == cli.EXIT_CONFIG


def test_input_errors_raised_while_simulating_exit_with_2(tmp_path):
    write_reference(str(tmp_path))
    with mock.patch("ceropt.cli.rollout", side_effect=ModelInputError("non-finite initial state")):
        code = cli.main(["simulate", "--scenario", "smoke", "--out", str(tmp_path),
                         "--controls", os.path.join(str(tmp_path), artifacts.CONTROLS_FILE)])
    assert code == cli.EXIT_CONFIG
    with mock.patch("ceropt.cli.rollout", side_effect=ValueError("controls must have shape (n, 2)")):
        code = cli.main(["simulate", "--scenario", "smoke", "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG


def test_solver_failure_exits_with_1(tmp_path):
    with mock.patch("ceropt.cli.solve_homotopy", side_effect=SolverError("bounds do not match")):
        code = cli.main(["optimize", "--scenario", "smoke", "--out", str(tmp_path)])
    assert code == cli.EXIT_FAILURE


def test_riccati_divergence_exits_with_1(tmp_path):
    write_reference(str(tmp_path))
    with mock.patch("ceropt.cli.riccati_sweep", side_effect=RiccatiDivergenceError("|P| exceeded", 1)):
        code = cli.main(["track", "--scenario", "smoke", "--out", str(tmp_path)])
    assert code == cli.EXIT_FAILURE


@pytest.mark.parametrize("results,expected", [
    ([CheckResult("mass", True, 0.0, 1e-9)], cli.EXIT_OK),
    ([CheckResult("mass", True, 0.0, 1e-9), CheckResult("energy", False, 1.0, 1e-6)], cli.EXIT_FAILURE),
])
def test_check_exit_code_follows_the_results(tmp_path, results, expected):
    with mock.patch("ceropt.cli.run_checks", return_value=results):
        code = cli.main(["check", "--scenario", "smoke", "--out", str(tmp_path)])
    assert code == expected
    frame, _ = artifacts.read_csv(str(tmp_path / artifacts.CHECKS_FILE))
    assert len(frame) == len(results)


def test_eps_schedule_flag(tmp_path):
    with mock.patch("ceropt.cli.solve_homotopy", side_effect=SolverError("stop")) as solve:
        cli.main(["optimize", "--scenario", "smoke", "--out", str(tmp_path), "--eps-schedule", "0.5,0.05,0.005"])
    assert solve.call_args.kwargs["options"]["eps_schedule"] == [0.5, 0.05, 0.005]

    with pytest.raises(SystemExit) as info:
        cli.main(["optimize", "--eps-schedule", "0.5,fast"])
    assert info.value.code == 2


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv("CEROPT_LOG", "debug")
    assert cli.configure_logging() == logging.DEBUG
    monkeypatch.setenv("CEROPT_LOG", "15")
    assert cli.configure_logging() == 15
    monkeypatch.setenv("CEROPT_LOG", "chatty")
    assert cli.configure_logging() == logging.WARNING
    monkeypatch.delenv("CEROPT_LOG")
    assert cli.configure_logging() == logging.WARNING
