# tests/test_artifacts.py

import json

import numpy as np
import pandas as pd
import pytest

from ceropt import artifacts
from ceropt.artifacts import ArtifactError
from ceropt.modes import ModeSchedule
from ceropt.solver import NlpSolution, SolveReport, SolveStatus

HASH = "ab" * 32


def test_csv_header_and_table(tmp_path):
    path = str(tmp_path / "out" / "controls.csv")
    df = pd.DataFrame({"t": [0.0, 0.005], "u1": [1.0, 2.0 / 3.0], "u2": [0.0, -1.5]})
    artifacts.write_csv(path, df, HASH, 7, "controls")

    with open(path) as f:
        first = f.readline().strip()
    assert first == f"# ceropt-csv v1 config_hash={HASH} seed=7 kind=controls"

    table, meta = artifacts.read_csv(path)
    assert meta == {"version": 1, "config_hash": HASH, "seed": 7, "kind": "controls"}
    np.testing.assert_allclose(table["u1"], [1.0, 2.0 / 3.0], rtol=1e-11)
    np.testing.assert_allclose(artifacts.read_controls(path), [[1.0, 0.0], [2.0 / 3.0, -1.5]], rtol=1e-11)


def test_identical_inputs_give_identical_bytes(tmp_path):
    df = pd.DataFrame({"t": [0.0, 0.1], "x": [np.pi, np.e]})
    a = artifacts.write_csv(str(tmp_path / "a.csv"), df, HASH, 0, "rollout")
    b = artifacts.write_csv(str(tmp_path / "b.csv"), df, HASH, 0, "rollout")
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


@pytest.mark.parametrize("first_line,match", [
    ("# ceropt-csv v2 config_hash=x seed=0 kind=rollout", "unsupported CSV schema version 2"),
    ("# ceropt-csv vX config_hash=x seed=0 kind=rollout", "malformed"),
    ("# ceropt-csv", "no schema version"),
    ("t,u1,u2", "not a ceropt CSV"),
])
def test_bad_headers_are_rejected(tmp_path, first_line, match):
    path = tmp_path / "bad.csv"
    path.write_text(first_line + "\nt,u1,u2\n0,1,2\n")
    with pytest.raises(ArtifactError, match=match):
        artifacts.read_csv(str(path))


def test_missing_control_columns(tmp_path):
    path = str(tmp_path / "rollout.csv")
    artifacts.write_csv(path, pd.DataFrame({"t": [0.0], "theta1": [0.0]}), HASH, 0, "rollout")
    with pytest.raises(ArtifactError, match="control columns"):
        artifacts.read_controls(path)
    with pytest.raises(ArtifactError, match="not found"):
        artifacts.read_controls(str(tmp_path / "absent.csv"))


@pytest.mark.parametrize("u1,n,match", [
    ([], None, "no control rows"),
    ([1.0, float("nan")], None, "non-finite"),
    ([1.0, 2.0], 3, "expected 3"),
])
def test_unusable_controls_are_rejected(tmp_path, u1, n, match):
    path = str(tmp_path / "controls.csv")
    frame = pd.DataFrame({"t": np.arange(len(u1), dtype=float), "u1": u1, "u2": np.zeros(len(u1))})
    artifacts.write_csv(path, frame, HASH, 0, "controls")
    with pytest.raises(ArtifactError, match=match):
        artifacts.read_controls(path, n=n)


def test_json_carries_hash_and_seed(tmp_path):
    path = artifacts.write_json(str(tmp_path / "x.json"), {"values": np.arange(3), "scale": np.float64(2.5)},
                                HASH, 3)
    with open(path) as f:
        data = json.load(f)
    assert data == {"config_hash": HASH, "seed": 3, "values": [0, 1, 2], "scale": 2.5}

    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ArtifactError, match="not valid JSON"):
        artifacts.read_json(str(bad))


def test_schedule_file(tmp_path):
    schedule = ModeSchedule.from_dict({
        "switch_times": [0.41], "modes": [["SEA", "STG"], ["DEC", "SEA"]], "horizon": 0.5,
    })
    path = artifacts.write_schedule(str(tmp_path / artifacts.SCHEDULE_FILE), schedule, HASH, 0)
    assert artifacts.read_schedule(path) == schedule


def test_solution_file(tmp_path):
    solution = NlpSolution(
        z=np.array([1.0, 2.0]), multipliers=np.array([0.5]),
        bound_lower=np.zeros(2), bound_upper=np.array([0.0, 1.0]),
        row_lower=np.zeros(1), row_upper=np.zeros(1), objective=-3.0,
    )
    path = artifacts.write_json(str(tmp_path / artifacts.SOLUTION_FILE),
                                artifacts.solution_payload(solution, 1e-6), HASH, 0)
    again = artifacts.read_solution(path)
    np.testing.assert_allclose(again.z, solution.z)
    np.testing.assert_allclose(again.bound_upper, solution.bound_upper)
    assert again.objective == -3.0

    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"z": [1.0]}))
    with pytest.raises(ArtifactError, match="malformed solution"):
        artifacts.read_solution(str(broken))


def test_report_marks_partial_results(tmp_path):
    report = SolveReport(status=SolveStatus.MAX_ITER, objective=-1.0, max_defect=1e-3, max_complementarity=0.0,
                         eps_trace=[0.1, 0.01], final_epsilon=0.1)
    path = artifacts.write_report(str(tmp_path / artifacts.REPORT_FILE), report, HASH, 0, final_ee_speed=2.0)
    data = artifacts.read_json(path)
    assert data["partial"] is True
    assert data["status"] == "max-iter"
    assert data["final_ee_speed"] == 2.0
    assert data["final_epsilon"] == 0.1
