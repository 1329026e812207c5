"""
Plot-ready tables.

Every function returns a pandas DataFrame with a leading time column `t`,
ready to be written with ceropt.artifacts.write_csv or handed to any
plotting tool.
"""
import numpy as np
import pandas as pd

from ceropt.constants import STATE_LABELS, N_CONSTRAINTS
from ceropt.modes import ModeSchedule
from ceropt.plant import PlantParams, ee_kinematics

ZETA_LABELS = [f"zeta{i + 1}" for i in range(N_CONSTRAINTS)]
CONTROL_LABELS = ["u1", "u2"]


def ee_speed_and_acceleration(params: PlantParams, times, states):
    """
    |v_EE| from the kinematics and |a_EE| by differentiating the sampled
    end-effector velocity in time.
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    _, velocity, _ = ee_kinematics(params, states[:, 4:6], states[:, 8:10])
    speed = np.linalg.norm(velocity, axis=-1)
    if len(times) < 2:
        return speed, np.zeros_like(speed)
    acceleration = np.gradient(velocity, times, axis=0)
    return speed, np.linalg.norm(acceleration, axis=-1)


def _columns(labels, values) -> dict:
    values = np.asarray(values, dtype=float)
    return {label: values[:, j] for j, label in enumerate(labels)}


def _modes(patterns) -> dict:
    return {
        "mode_j1": [p.modes[0] for p in patterns],
        "mode_j2": [p.modes[1] for p in patterns],
    }


def rollout_frame(params: PlantParams, rollout) -> pd.DataFrame:
    """States, motor speeds, end-effector speed/acceleration and active modes of a rollout."""
    speed, acceleration = ee_speed_and_acceleration(params, rollout.times, rollout.states)
    return pd.DataFrame({
        "t": rollout.times,
        **_columns(STATE_LABELS, rollout.states),
        **_columns(CONTROL_LABELS, rollout.controls),
        "v_ee": speed,
        "a_ee": acceleration,
        **_modes(rollout.patterns),
    })


def trajectory_frame(params: PlantParams, traj) -> pd.DataFrame:
    """
    Transcription nodes k = 0..n. Step quantities (u^k, zeta^k) sit on the
    node where their step ends; node 0 carries zeros.
    """
    speed, acceleration = ee_speed_and_acceleration(params, traj.times, traj.xs)
    return pd.DataFrame({
        "t": traj.times,
        **_columns(STATE_LABELS, traj.xs),
        **_columns(CONTROL_LABELS, np.vstack([np.zeros((1, 2)), traj.us])),
        **_columns(ZETA_LABELS, np.vstack([np.zeros((1, N_CONSTRAINTS)), traj.zetas])),
        "v_ee": speed,
        "a_ee": acceleration,
    })


def controls_frame(traj) -> pd.DataFrame:
    """One row per step: the zero-order-hold motor speed command and its start time."""
    return pd.DataFrame({"t": traj.times[:-1], **_columns(CONTROL_LABELS, traj.us)})


def clutch_torque_frame(traj, schedule: ModeSchedule) -> pd.DataFrame:
    """Clutch torques per step with the extracted mode of each joint."""
    dt = traj.times[1] - traj.times[0]
    return pd.DataFrame({
        "t": traj.times[1:],
        **_columns(ZETA_LABELS, traj.zetas),
        **_modes(schedule.step_patterns(len(traj.zetas), dt)),
    })


def tracking_frame(closed, reference, opened=None) -> pd.DataFrame:
    """Closed-loop motor speeds against the feedforward, and |x - x_ref| over time."""
    ref_states = np.array([reference.state(t) for t in closed.times])
    data = {
        "t": closed.times,
        **_columns(CONTROL_LABELS, closed.controls),
        **_columns(["u_ref1", "u_ref2"], [reference.feedforward(t) for t in closed.times]),
        "error": np.linalg.norm(closed.states - ref_states, axis=1),
    }
    if opened is not None:
        open_err = np.array([np.linalg.norm(x - reference.state(t)) for t, x in zip(opened.times, opened.states)])
        data["open_loop_error"] = np.interp(closed.times, opened.times, open_err)
    return pd.DataFrame(data)
