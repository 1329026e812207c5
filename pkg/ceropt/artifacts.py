"""
Artifact files.

CSV files start with one metadata line

    # ceropt-csv v1 config_hash=<sha256> seed=<int> kind=<name>

followed by a pandas table. JSON files carry the same `config_hash` and
`seed` keys at the top level. Readers reject any other CSV schema version.
"""
from __future__ import annotations

import json
import logging
import os

import numpy as np
import pandas as pd

from ceropt.constants import CSV_SCHEMA_VERSION
from ceropt.lqr import GainSchedule
from ceropt.modes import ModeSchedule
from ceropt.solver import NlpSolution, SolveReport

logger = logging.getLogger(__name__)

CSV_MAGIC = "# ceropt-csv"
FLOAT_FORMAT = "%.12g"

# file names inside an output directory
SOLUTION_FILE = "solution.json"
TRAJECTORY_FILE = "trajectory.csv"
CONTROLS_FILE = "controls.csv"
CLUTCH_FILE = "clutch_torques.csv"
SCHEDULE_FILE = "schedule.json"
REPORT_FILE = "report.json"
ROLLOUT_FILE = "rollout.csv"
TRACKING_FILE = "tracking.csv"
TRACKING_SUMMARY_FILE = "tracking_summary.json"
GAINS_FILE = "gains.json"
CHECKS_FILE = "checks.csv"
CONFIG_FILE = "config.json"


class ArtifactError(ValueError):
    """
    Raised for unreadable artifacts: missing files, unknown schema versions, wrong shapes.
    """


# ------------------------------------------------------------------
# CSV

def csv_header(config_hash: str, seed: int, kind: str) -> str:
    return f"{CSV_MAGIC} v{CSV_SCHEMA_VERSION} config_hash={config_hash} seed={seed} kind={kind}"


def write_csv(path: str, df: pd.DataFrame, config_hash: str, seed: int, kind: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(csv_header(config_hash, seed, kind) + "\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("wrote %s (%d rows)", path, len(df))
    return path


def parse_csv_header(line: str) -> dict:
    if not line.startswith(CSV_MAGIC):
        raise ArtifactError(f"not a ceropt CSV (first line: {line.strip()!r})")
    tokens = line[len(CSV_MAGIC):].split()
    if not tokens or not tokens[0].startswith("v"):
        raise ArtifactError(f"CSV header has no schema version: {line.strip()!r}")
    try:
        version = int(tokens[0][1:])
    except ValueError:
        raise ArtifactError(f"malformed CSV schema version {tokens[0]!r}") from None
    if version != CSV_SCHEMA_VERSION:
        raise ArtifactError(f"unsupported CSV schema version {version}, expected {CSV_SCHEMA_VERSION}")

    meta = {"version": version}
    for token in tokens[1:]:
        key, _, value = token.partition("=")
        meta[key] = value
    if "seed" in meta:
        meta["seed"] = int(meta["seed"])
    return meta


def read_csv(path: str) -> tuple[pd.DataFrame, dict]:
    """Return (table, metadata); metadata holds version, config_hash, seed and kind."""
    if not os.path.exists(path):
        raise ArtifactError(f"file not found: {path}")
    with open(path, "r") as f:
        meta = parse_csv_header(f.readline())
        df = pd.read_csv(f)
    return df, meta


# ------------------------------------------------------------------
# JSON

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(path: str, payload: dict, config_hash: str, seed: int) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    data = {"config_hash": config_hash, "seed": seed, **_jsonable(payload)}
    with open(path, "w") as f:
        json.dump(data, f, indent=4)
    logger.debug("wrote %s", path)
    return path


def read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise ArtifactError(f"file not found: {path}")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path} is not valid JSON: {e}") from e


def solution_payload(solution: NlpSolution, epsilon: float | None) -> dict:
    return {
        "epsilon": epsilon,
        "objective": solution.objective,
        "z": solution.z,
        "multipliers": solution.multipliers,
        "bound_lower": solution.bound_lower,
        "bound_upper": solution.bound_upper,
        "row_lower": solution.row_lower,
        "row_upper": solution.row_upper,
    }


def read_solution(path: str) -> NlpSolution:
    data = read_json(path)
    try:
        return NlpSolution(
            z=np.array(data["z"], dtype=float),
            multipliers=np.array(data["multipliers"], dtype=float),
            bound_lower=np.array(data["bound_lower"], dtype=float),
            bound_upper=np.array(data["bound_upper"], dtype=float),
            row_lower=np.array(data["row_lower"], dtype=float),
            row_upper=np.array(data["row_upper"], dtype=float),
            objective=float(data["objective"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"malformed solution file {path}: {e}") from e


def write_schedule(path: str, schedule: ModeSchedule, config_hash: str, seed: int) -> str:
    return write_json(path, schedule.to_dict(), config_hash, seed)


def read_schedule(path: str) -> ModeSchedule:
    data = read_json(path)
    return ModeSchedule.from_dict({k: data[k] for k in ("switch_times", "modes", "horizon") if k in data})


def write_report(path: str, report: SolveReport, config_hash: str, seed: int, **extra) -> str:
    payload = {**report.to_dict(), "partial": not report.converged, **extra}
    return write_json(path, payload, config_hash, seed)


def write_gains(path: str, gains: GainSchedule, config_hash: str, seed: int) -> str:
    return write_json(path, gains.to_dict(), config_hash, seed)


def read_gains(path: str) -> GainSchedule:
    return GainSchedule.from_dict(read_json(path))


def read_controls(path: str, n: int | None = None) -> np.ndarray:
    """(n, 2) motor-speed commands from a controls CSV; `n` pins the row count."""
    df, _ = read_csv(path)
    missing = [c for c in ("u1", "u2") if c not in df.columns]
    if missing:
        raise ArtifactError(f"{path} lacks control columns {missing}")
    controls = df[["u1", "u2"]].to_numpy(dtype=float)
    if len(controls) == 0:
        raise ArtifactError(f"{path} holds no control rows")
    if n is not None and len(controls) != n:
        raise ArtifactError(f"{path} holds {len(controls)} control rows, expected {n}")
    if not np.all(np.isfinite(controls)):
        raise ArtifactError(f"{path} holds non-finite controls")
    return controls
