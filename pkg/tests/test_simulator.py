# tests/test_simulator.py

import unittest

import numpy as np
import pytest

from ceropt.constants import STATE_DIM
from ceropt.modes import GAMMA, ClutchPattern, ModeSchedule, constraint_jacobian
from ceropt.plant import ModelInputError, PlantParams, eval_model, kinetic_energy, total_energy
from ceropt.simulator import (
    SimulationError,
    SingularConstraintError,
    ZeroOrderHold,
    constraint_torque,
    continuous_dynamics,
    impact,
    node_deviation,
    reset_map,
    rollout,
)


# ---------------------------
# Helper function
# ---------------------------
def frictionless():
    return PlantParams.default().replace(
        coulomb_link=np.zeros(2),
        visc_link=np.zeros(2),
        coulomb_spring=np.zeros(2),
        visc_spring=np.zeros(2),
    )


def moving_state():
    x = np.zeros(STATE_DIM)
    x[0:2] = [0.05, -0.03]
    x[4:6] = [0.3, -0.2]
    x[6:10] = [1.0, -0.5, 2.0, 0.7]
    return x


def guessed(horizon=0.5, switch=0.41):
    return ModeSchedule(
        (switch,),
        (ClutchPattern.from_modes(("SEA", "STG")), ClutchPattern.from_modes(("DEC", "SEA"))),
        horizon,
    )


# ---------------------------
# Tests
# ---------------------------
class TestImpact(unittest.TestCase):

    def setUp(self):
        self.params = PlantParams.default()
        self.x = moving_state()
        self.model = eval_model(self.params, self.x)

    def test_post_impact_velocity_satisfies_new_constraints(self):
        C = constraint_jacobian(ClutchPattern.from_modes(("BRK", "SEA")))
        dxi_plus, impulse = impact(self.model, C, self.x[6:10])
        self.assertEqual(impulse.shape, (3,))
        self.assertLess(np.max(np.abs(C @ dxi_plus)), 1e-12)

    def test_impact_dissipates_and_is_idempotent(self):
        pattern = ClutchPattern.from_modes(("SEA", "STG"))
        x_plus = reset_map(self.params, self.x, pattern)
        self.assertLessEqual(kinetic_energy(self.params, x_plus), kinetic_energy(self.params, self.x))
        np.testing.assert_allclose(x_plus[0:6], self.x[0:6])
        np.testing.assert_allclose(reset_map(self.params, x_plus, pattern), x_plus, atol=1e-12)

    def test_release_leaves_velocity_unchanged(self):
        dxi_plus, impulse = impact(self.model, constraint_jacobian(ClutchPattern.disengaged()), self.x[6:10])
        np.testing.assert_allclose(dxi_plus, self.x[6:10])
        self.assertEqual(impulse.size, 0)

    def test_dependent_constraints_are_singular(self):
        C = np.vstack([GAMMA[0], GAMMA[0]])
        with self.assertRaises(SingularConstraintError):
            impact(self.model, C, self.x[6:10])


def test_brake_holds_a_loaded_spring():
    x = np.zeros(STATE_DIM)
    x[0] = 0.1  # deflection theta1 - psi1
    model = eval_model(frictionless(), x)
    C = constraint_jacobian(ClutchPattern.from_modes(("STG", "DEC")))
    # the brake pushes back against the +K1 * 0.1 spring torque
    np.testing.assert_allclose(constraint_torque(model, C), [-1.25], rtol=1e-12)
    assert constraint_torque(model, np.zeros((0, 4))).shape == (0,)


def test_constrained_acceleration_keeps_relative_speed():
    params = PlantParams.default()
    pattern = ClutchPattern.from_modes(("SEA", "STG"))
    x = reset_map(params, moving_state(), pattern)
    xdot = continuous_dynamics(params, x, np.array([0.5, -0.5]), pattern)
    np.testing.assert_allclose(xdot[0:2], [0.5, -0.5])
    np.testing.assert_allclose(xdot[2:6], x[6:10])
    assert np.max(np.abs(constraint_jacobian(pattern) @ xdot[6:10])) < 1e-9


def test_zero_order_hold_indexing():
    hold = ZeroOrderHold([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], 0.3)
    assert hold(0.0)[0] == 1.0
    assert hold(0.1)[0] == 2.0
    assert hold(0.3)[0] == 3.0
    np.testing.assert_allclose(hold.breakpoints, [0.1, 0.2])
    with pytest.raises(ValueError):
        ZeroOrderHold(np.zeros((3, 3)), 0.3)


@pytest.mark.parametrize("fixed_step", [None, 0.01, 0.001])
def test_held_motor_speed_integrates_exactly(fixed_step):
    # theta1 = integral of u1: 1 rad/s for 10 ms, then zero
    schedule = ModeSchedule.constant(ClutchPattern.from_modes(("DEC", "DEC")), 0.02)
    result = rollout(frictionless(), np.zeros(STATE_DIM), [[1.0, 0.0], [0.0, 0.0]], schedule,
                     fixed_step=fixed_step)
    assert result.states[-1, 0] == pytest.approx(0.01, rel=1e-12, abs=1e-14)
    assert result.state_at(0.005)[0] == pytest.approx(0.005, rel=1e-9)
    np.testing.assert_allclose(result.controls[0], [1.0, 0.0])
    np.testing.assert_allclose(result.controls[-1], [0.0, 0.0])


@pytest.mark.parametrize("modes", [("DEC", "DEC"), ("SEA", "STG"), ("STG", "SEA")])
def test_energy_is_conserved_without_friction_or_motor_motion(modes):
    params = frictionless()
    schedule = ModeSchedule.constant(ClutchPattern.from_modes(modes), 0.2)
    result = rollout(params, moving_state(), None, schedule, atol=1e-10, rtol=1e-10)
    energy = total_energy(params, result.states)
    assert np.max(np.abs(energy - energy[0])) / abs(energy[0]) < 1e-5


def test_switches_are_recorded_with_post_reset_samples():
    params = PlantParams.default()
    schedule = guessed()
    result = rollout(params, np.zeros(STATE_DIM), np.full((10, 2), 2.0), schedule)

    assert len(result.impulses) == 1
    record = result.impulses[0]
    assert record.time == pytest.approx(0.41)
    assert str(record.pattern_after) == "DEC/SEA"

    idx = int(np.searchsorted(result.times, 0.41))
    np.testing.assert_allclose(result.states[idx], record.state_plus)
    np.testing.assert_allclose(result.state_at(0.41), record.state_plus)
    assert result.times[-1] == pytest.approx(0.5)
    assert result.constraint_violation() < 1e-6


def test_fixed_step_agrees_with_adaptive():
    params = PlantParams.default()
    schedule = ModeSchedule.constant(ClutchPattern.from_modes(("SEA", "SEA")), 0.1)
    adaptive = rollout(params, moving_state(), np.ones((5, 2)), schedule, sample_dt=0.01)
    fixed = rollout(params, moving_state(), np.ones((5, 2)), schedule, fixed_step=1e-4, sample_dt=0.01)
    np.testing.assert_allclose(adaptive.times, fixed.times)
    np.testing.assert_allclose(adaptive.states, fixed.states, atol=1e-5)
    assert node_deviation(adaptive, fixed.times, fixed.states) < 1e-5


def test_rollout_input_validation():
    params = PlantParams.default()
    schedule = ModeSchedule.constant(ClutchPattern.disengaged(), 0.1)
    with pytest.raises(ModelInputError):
        rollout(params, np.zeros(4), None, schedule)
    with pytest.raises(ValueError, match="exceeds schedule horizon"):
        rollout(params, np.zeros(STATE_DIM), None, schedule, T=0.2)


def test_simulation_error_carries_last_time():
    error = SimulationError("integration failed", 0.25)
    assert error.last_time == 0.25
    assert "0.25" in str(error)
