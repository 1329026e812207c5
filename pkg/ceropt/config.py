"""
Experiment configuration.

A config is a JSON object with the sections listed in CONFIG_SECTIONS.
It is resolved in layers: package defaults, then the bundled scenario
(from the file's "scenario" key or the caller), then the file itself,
then command-line overrides. Every problem surfaces as a ConfigError.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from ceropt.constants import (
    CONFIG_SECTIONS,
    DEFAULT_OUT_DIR,
    DEFAULT_SCENARIO,
    DEFAULT_SEED,
    LQR_DEFAULTS,
    PERTURBATION_DEFAULTS,
    SCENARIOS,
    SOLVER_DEFAULTS,
    STATE_DIM,
    STATE_LABELS,
)
from ceropt.lqr import lqr_options, validate_weights
from ceropt.modes import ModeSchedule, ScheduleError
from ceropt.plant import ModelInputError, PlantParams, validate_plant_params
from ceropt.solver import BACKENDS, validate_eps_schedule
from ceropt.transcription import TranscriptionConfig, TranscriptionError, validate_transcription_config

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """
    Raised for unknown keys, invalid values or missing files in an experiment config.
    """


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    scenario: str
    plant: PlantParams
    transcription: TranscriptionConfig
    schedule: ModeSchedule | None
    solver: dict
    lqr: dict
    perturbation: dict
    out: str
    seed: int
    resolved: dict

    @property
    def hash(self) -> str:
        # the output directory does not change results
        return config_hash({k: v for k, v in self.resolved.items() if k != "out"})

    def perturbation_vector(self) -> np.ndarray:
        dx = np.zeros(STATE_DIM)
        for label, offset in self.perturbation.items():
            dx[STATE_LABELS.index(label)] = offset
        return dx

    def to_dict(self) -> dict:
        return copy.deepcopy(self.resolved)


def config_hash(resolved: dict) -> str:
    """SHA-256 of the canonical JSON form."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object, got {type(data).__name__}")
    return data


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object, got {data!r}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {unknown}")


def default_config(scenario: str = DEFAULT_SCENARIO) -> dict:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{scenario}', expected one of {sorted(SCENARIOS)}")
    base = {
        "scenario": scenario,
        "plant": {},
        "transcription": {},
        "schedule": None,
        "solver": {},
        "lqr": {},
        "perturbation": dict(PERTURBATION_DEFAULTS),
        "out": DEFAULT_OUT_DIR,
        "seed": DEFAULT_SEED,
    }
    return _merge(base, SCENARIOS[scenario])


def resolve_config(data: dict | None = None, scenario: str | None = None,
                   overrides: dict | None = None) -> ExperimentConfig:
    """Layer defaults, scenario, file contents and overrides, then validate."""
    data = dict(data or {})
    overrides = dict(overrides or {})
    _check_keys("config", data, CONFIG_SECTIONS)
    _check_keys("overrides", overrides, CONFIG_SECTIONS)

    name = overrides.get("scenario") or scenario or data.get("scenario") or DEFAULT_SCENARIO
    raw = _merge(_merge(default_config(name), data), overrides)
    raw["scenario"] = name
    # an explicit perturbation replaces the default offsets instead of adding to them
    for source in (overrides, data):
        if "perturbation" in source:
            raw["perturbation"] = source["perturbation"] or {}
            break

    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ModelInputError, TranscriptionError, ScheduleError, ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"invalid config: {e}") from e


def _build(raw: dict) -> ExperimentConfig:
    plant = validate_plant_params(PlantParams.from_dict(raw["plant"]))
    transcription = validate_transcription_config(TranscriptionConfig.from_dict(raw["transcription"]))

    schedule = None
    if raw.get("schedule") is not None:
        schedule = ModeSchedule.from_dict(raw["schedule"], horizon=transcription.T)
        if abs(schedule.horizon - transcription.T) > 1e-12:
            raise ConfigError(f"schedule horizon {schedule.horizon} differs from T={transcription.T}")

    _check_keys("solver", raw["solver"], SOLVER_DEFAULTS)
    solver = {**SOLVER_DEFAULTS, **raw["solver"]}
    if solver["backend"] not in BACKENDS:
        raise ConfigError(f"unknown solver backend '{solver['backend']}', expected one of {sorted(BACKENDS)}")
    solver["eps_schedule"] = validate_eps_schedule(solver["eps_schedule"])
    for key in ["max_iter", "tol", "feas_tol"]:
        if not solver[key] > 0:
            raise ConfigError(f"solver.{key} must be positive, got {solver[key]}")

    _check_keys("lqr", raw["lqr"], LQR_DEFAULTS)
    lqr = lqr_options(raw["lqr"])
    P_T = lqr["Q"] if lqr["P_T"] is None else lqr["P_T"]
    validate_weights(lqr["Q"], lqr["R"], P_T)

    _check_keys("perturbation", raw["perturbation"], STATE_LABELS)
    perturbation = {label: float(v) for label, v in raw["perturbation"].items()}
    if not all(np.isfinite(v) for v in perturbation.values()):
        raise ConfigError(f"perturbation offsets must be finite, got {perturbation}")

    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    resolved = {
        "scenario": raw["scenario"],
        "plant": plant.to_dict(),
        "transcription": transcription.to_dict(),
        "schedule": None if schedule is None else schedule.to_dict(),
        "solver": solver,
        "lqr": {k: v for k, v in lqr.items()},
        "perturbation": perturbation,
        "out": str(raw["out"]),
        "seed": seed,
    }
    config = ExperimentConfig(
        scenario=raw["scenario"],
        plant=plant,
        transcription=transcription,
        schedule=schedule,
        solver=solver,
        lqr=lqr,
        perturbation=perturbation,
        out=str(raw["out"]),
        seed=seed,
        resolved=resolved,
    )
    logger.debug("resolved config '%s' (hash %s)", config.scenario, config.hash[:12])
    return config


def load_config(path: str | None = None, scenario: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Read an optional JSON file and resolve it."""
    data = read_config_file(path) if path is not None else {}
    return resolve_config(data, scenario=scenario, overrides=overrides)


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=4)
