# tests/test_modes.py

import numpy as np
import pytest

from ceropt.modes import (
    GAMMA,
    ClutchPattern,
    ModeSchedule,
    ModeTableError,
    ScheduleError,
    all_patterns,
    constraint_jacobian,
    engagement_flags,
    engagement_indicator,
    extract_schedule,
    relative_speeds,
    relative_speeds_of,
    synthesize_signals,
    validate_schedule,
)
from ceropt.plant import HybridState


# ---------------------------
# Helper function
# ---------------------------
def guessed_schedule():
    return ModeSchedule.from_dict({
        "switch_times": [0.41],
        "modes": [["SEA", "STG"], ["DEC", "SEA"]],
        "horizon": 0.5,
    })


# ---------------------------
# Tests
# ---------------------------
def test_mode_table_covers_every_pattern():
    patterns = all_patterns()
    assert len(patterns) == 16
    names = {p.modes for p in patterns}
    assert len(names) == 16
    assert ClutchPattern.from_modes(("SEA", "STG")).engaged == (False, True, True, False)
    assert ClutchPattern.from_modes(("brk", "dec")).indices == [0, 1]


def test_unknown_mode_is_rejected():
    with pytest.raises(ScheduleError, match="unknown mode"):
        ClutchPattern.from_modes(("SEA", "LOCK"))
    with pytest.raises(ScheduleError):
        ClutchPattern.from_modes(("SEA",))
    with pytest.raises(ModeTableError):
        ClutchPattern((True, False))


def test_constraint_jacobian_rows():
    C = constraint_jacobian(ClutchPattern.from_modes(("SEA", "BRK")))
    np.testing.assert_allclose(C, GAMMA[[1, 2, 3]])
    assert constraint_jacobian(ClutchPattern.disengaged()).shape == (0, 4)


def test_relative_speeds_equal_gamma_product():
    rng = np.random.default_rng(0)
    dxi = rng.normal(size=(6, 4))
    np.testing.assert_allclose(relative_speeds_of(dxi), dxi @ GAMMA.T)

    state = HybridState(theta=np.zeros(2), psi=np.zeros(2), q=np.zeros(2), dpsi=np.array([1.0, -0.5]),
                        dq=np.array([0.25, -0.5]))
    np.testing.assert_allclose(relative_speeds(state), [1.0, 0.75, -0.5, 0.0])


def test_engagement_indicator_sign():
    assert engagement_indicator(0.0, 100.0) == pytest.approx(0.5)
    assert engagement_indicator(1.0, 100.0) < 0
    with pytest.raises(ValueError):
        engagement_indicator(0.0, 0.0)


def test_pattern_lookup_is_right_continuous():
    schedule = guessed_schedule()
    assert str(schedule.pattern_at(0.0)) == "SEA/STG"
    assert str(schedule.pattern_at(0.4099)) == "SEA/STG"
    assert str(schedule.pattern_at(0.41)) == "DEC/SEA"
    assert schedule.boundaries() == [0.0, 0.41, 0.5]
    assert schedule.interval_index(0.45) == 1


@pytest.mark.parametrize("data", [
    {"switch_times": [0.6], "modes": [["SEA", "STG"], ["DEC", "SEA"]], "horizon": 0.5},
    {"switch_times": [0.3, 0.2], "modes": [["SEA", "STG"], ["DEC", "SEA"], ["SEA", "STG"]], "horizon": 0.5},
    {"switch_times": [0.2], "modes": [["SEA", "STG"], ["SEA", "STG"]], "horizon": 0.5},
    {"switch_times": [0.2], "modes": [["SEA", "STG"]], "horizon": 0.5},
    {"modes": [["SEA", "STG"]], "horizon": -1.0},
    {"switch_times": [0.2]},
])
def test_invalid_schedules_are_rejected(data):
    with pytest.raises(ScheduleError):
        ModeSchedule.from_dict(data, horizon=data.get("horizon"))


def test_schedule_dict_keeps_modes():
    schedule = guessed_schedule()
    again = ModeSchedule.from_dict(schedule.to_dict())
    assert again == schedule
    assert str(again) == "SEA/STG -> @0.41s DEC/SEA"


def test_extraction_recovers_a_synthesized_schedule():
    n = 100
    schedule = guessed_schedule()
    zeta, phi = synthesize_signals(schedule, n)
    extracted = extract_schedule(zeta, phi, schedule.horizon / n)
    assert extracted.patterns == schedule.patterns
    assert extracted.switch_times == pytest.approx(schedule.switch_times)
    assert extracted.horizon == pytest.approx(schedule.horizon)


def test_engaged_constraint_stays_engaged_while_still():
    zeta = np.zeros((4, 4))
    phi = np.ones((4, 4))
    zeta[0, 1] = 2.0          # clutch 1 loaded on the first step
    phi[:3, 1] = 0.0          # then unloaded but still
    flags = engagement_flags(zeta, phi)
    assert flags[:, 1].tolist() == [True, True, True, False]
    assert not flags[:, [0, 2, 3]].any()


def test_extraction_thresholds_are_validated():
    with pytest.raises(ScheduleError):
        engagement_flags(np.zeros((3, 4)), np.zeros((3, 4)), torque_eps=0.0)
    with pytest.raises(ScheduleError):
        engagement_flags(np.zeros((3, 4)), np.zeros((3, 3)))


def test_validate_schedule_accepts_constant():
    schedule = ModeSchedule.constant(ClutchPattern.disengaged(), 0.5)
    assert validate_schedule(schedule) is schedule
    assert schedule.step_patterns(3, 0.5 / 3) == [ClutchPattern.disengaged()] * 3
