"""
Clutch/brake mode algebra.

Per joint j two bilateral constraints can be engaged:
  brake   : dpsi_j = 0            (spring inertia locked)
  clutch  : dpsi_j - dq_j = 0     (spring inertia coupled to the link)

The four constraints are indexed i = 0..3 in the order
  phi = (dpsi1, dpsi1 - dq1, dpsi2, dpsi2 - dq2)
and joint modes follow the table

  mode   brake  clutch
  DEC      -      -
  SEA      -      x
  STG      x      -
  BRK      x      x
"""
from __future__ import annotations

import bisect
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from ceropt.constants import MODE_TORQUE_EPS, MODE_SPEED_EPS, N_CONSTRAINTS

logger = logging.getLogger(__name__)


class ScheduleError(ValueError):
    """
    Raised for invalid mode schedules, mode names or extraction thresholds.
    """


class ModeTableError(RuntimeError):
    """
    Raised when an engagement pattern has no entry in the mode table.
    """


# joint mode -> (brake engaged, clutch engaged)
MODE_TABLE = {
    "DEC": (False, False),
    "SEA": (False, True),
    "STG": (True, False),
    "BRK": (True, True),
}
_MODE_LOOKUP = {flags: mode for mode, flags in MODE_TABLE.items()}

# Rows Gamma_i = d phi_i / d dxi with dxi = (dpsi1, dpsi2, dq1, dq2)
GAMMA = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
])


@dataclass(frozen=True)
class ClutchPattern:
    engaged: tuple[bool, bool, bool, bool]

    def __post_init__(self):
        if len(self.engaged) != N_CONSTRAINTS:
            raise ModeTableError(f"pattern must have {N_CONSTRAINTS} entries, got {self.engaged}")
        object.__setattr__(self, "engaged", tuple(bool(e) for e in self.engaged))

    @classmethod
    def from_modes(cls, modes) -> ClutchPattern:
        """Build from per-joint mode names, e.g. ("SEA", "STG")."""
        if len(modes) != 2:
            raise ScheduleError(f"expected one mode per joint, got {modes}")
        engaged = []
        for mode in modes:
            try:
                engaged.extend(MODE_TABLE[str(mode).upper()])
            except KeyError:
                raise ScheduleError(f"unknown mode '{mode}', expected one of {list(MODE_TABLE)}") from None
        return cls(tuple(engaged))

    @classmethod
    def disengaged(cls) -> ClutchPattern:
        return cls((False,) * N_CONSTRAINTS)

    @property
    def modes(self) -> tuple[str, str]:
        try:
            return (
                _MODE_LOOKUP[self.engaged[0:2]],
                _MODE_LOOKUP[self.engaged[2:4]],
            )
        except KeyError:
            raise ModeTableError(f"pattern {self.engaged} is not in the mode table") from None

    @property
    def indices(self) -> list[int]:
        return [i for i, e in enumerate(self.engaged) if e]

    def __str__(self):
        return "/".join(self.modes)


def all_patterns() -> list[ClutchPattern]:
    """The 16 engagement patterns (4 modes per joint)."""
    return [ClutchPattern(flags) for flags in itertools.product((False, True), repeat=N_CONSTRAINTS)]


def relative_speeds(state):
    """phi = (dpsi1, dpsi1 - dq1, dpsi2, dpsi2 - dq2), also batched over leading axes."""
    x = state.to_vector() if hasattr(state, "to_vector") else state
    return relative_speeds_of(x[..., 6:10])


def relative_speeds_of(dxi):
    """phi from dxi = (dpsi1, dpsi2, dq1, dq2); equals GAMMA @ dxi."""
    return np.stack([
        dxi[..., 0],
        dxi[..., 0] - dxi[..., 2],
        dxi[..., 1],
        dxi[..., 1] - dxi[..., 3],
    ], axis=-1)


def constraint_jacobian(pattern: ClutchPattern) -> np.ndarray:
    """C_p: the Gamma rows of the engaged constraints in index order, shape (k, 4)."""
    idx = pattern.indices
    if not idx:
        return np.zeros((0, 4))
    return GAMMA[idx].copy()


def engagement_indicator(zeta, alpha: float):
    """
    sigma = exp(-alpha zeta^2) - 1/2

    Positive while the clutch torque is (close to) zero, tends to -1/2 as |zeta| grows.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be strictly positive, got {alpha}")
    return np.exp(-alpha * zeta ** 2) - 0.5


@dataclass(frozen=True)
class ModeSchedule:
    """
    Piecewise-constant patterns on [0, horizon].

    patterns[k] is active from switch_times[k-1] (or 0) up to switch_times[k]
    (or the horizon). At a switch instant the new pattern is the active one.
    """
    switch_times: tuple[float, ...]
    patterns: tuple[ClutchPattern, ...]
    horizon: float

    @classmethod
    def constant(cls, pattern: ClutchPattern, horizon: float) -> ModeSchedule:
        return cls((), (pattern,), float(horizon))

    @property
    def n_intervals(self) -> int:
        return len(self.patterns)

    def boundaries(self) -> list[float]:
        return [0.0, *self.switch_times, self.horizon]

    def intervals(self) -> list[tuple[float, float, ClutchPattern]]:
        edges = self.boundaries()
        return [(edges[k], edges[k + 1], p) for k, p in enumerate(self.patterns)]

    def interval_index(self, t: float) -> int:
        return bisect.bisect_right(self.switch_times, t)

    def pattern_at(self, t: float) -> ClutchPattern:
        return self.patterns[self.interval_index(t)]

    def step_patterns(self, n: int, dt: float) -> list[ClutchPattern]:
        """Pattern of each step k = 1..n, read at the step midpoint."""
        return [self.pattern_at((k + 0.5) * dt) for k in range(n)]

    def to_dict(self) -> dict:
        return {
            "switch_times": [float(t) for t in self.switch_times],
            "modes": [list(p.modes) for p in self.patterns],
            "horizon": float(self.horizon),
        }

    @classmethod
    def from_dict(cls, data: dict, horizon: float | None = None) -> ModeSchedule:
        try:
            times = tuple(float(t) for t in data.get("switch_times", []))
            patterns = tuple(ClutchPattern.from_modes(m) for m in data["modes"])
        except (KeyError, TypeError) as e:
            raise ScheduleError(f"malformed schedule: {data}") from e
        horizon = data.get("horizon", horizon)
        if horizon is None:
            raise ScheduleError("schedule needs a horizon")
        return validate_schedule(cls(times, patterns, float(horizon)))

    def __str__(self):
        parts = [str(self.patterns[0])]
        for t, p in zip(self.switch_times, self.patterns[1:]):
            parts.append(f"@{t:.4g}s {p}")
        return " -> ".join(parts)


def validate_schedule(schedule: ModeSchedule) -> ModeSchedule:
    T = schedule.horizon
    times = list(schedule.switch_times)

    if not T > 0:
        raise ScheduleError(f"horizon must be positive, got {T}")
    if len(schedule.patterns) != len(times) + 1:
        raise ScheduleError(
            f"{len(times)} switch times need {len(times) + 1} patterns, got {len(schedule.patterns)}"
        )
    if any(not 0.0 < t < T for t in times):
        raise ScheduleError(f"switch times must lie in (0, {T}), got {times}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScheduleError(f"switch times must be strictly increasing, got {times}")
    for k, (a, b) in enumerate(zip(schedule.patterns, schedule.patterns[1:])):
        if a == b:
            raise ScheduleError(f"patterns around switch {k} at t={times[k]} are identical ({a})")
    return schedule


def schedule_from_step_patterns(patterns: list[ClutchPattern], dt: float) -> ModeSchedule:
    """Run-length encode per-step patterns; a switch sits at the start of the first step of a run."""
    if not patterns:
        raise ScheduleError("no step patterns to encode")
    times = []
    runs = [patterns[0]]
    for j, p in enumerate(patterns[1:], start=1):
        if p != runs[-1]:
            times.append(j * dt)
            runs.append(p)
    return ModeSchedule(tuple(times), tuple(runs), len(patterns) * dt)


def engagement_flags(zeta_traj, phi_traj, torque_eps: float = MODE_TORQUE_EPS,
                     speed_eps: float = MODE_SPEED_EPS) -> np.ndarray:
    """
    Boolean (n, 4) engagement per step and constraint.

    A constraint is engaged when its torque exceeds `torque_eps`, and stays
    engaged while its relative speed is below `speed_eps`.
    """
    if not (torque_eps > 0 and speed_eps > 0):
        raise ScheduleError(f"thresholds must be positive, got torque_eps={torque_eps}, speed_eps={speed_eps}")

    zeta_traj = np.asarray(zeta_traj, dtype=float)
    phi_traj = np.asarray(phi_traj, dtype=float)
    if zeta_traj.ndim != 2 or zeta_traj.shape[1] != N_CONSTRAINTS or zeta_traj.shape != phi_traj.shape:
        raise ScheduleError(
            f"expected (n, {N_CONSTRAINTS}) torque and speed trajectories, got {zeta_traj.shape} and {phi_traj.shape}"
        )

    loaded = np.abs(zeta_traj) > torque_eps
    still = np.abs(phi_traj) < speed_eps
    flags = np.zeros(zeta_traj.shape, dtype=bool)
    previous = np.zeros(N_CONSTRAINTS, dtype=bool)
    for k in range(zeta_traj.shape[0]):
        previous = loaded[k] | (still[k] & previous)
        flags[k] = previous
    return flags


def extract_schedule(zeta_traj, phi_traj, dt: float, torque_eps: float = MODE_TORQUE_EPS,
                     speed_eps: float = MODE_SPEED_EPS) -> ModeSchedule:
    """
    Read a ModeSchedule off optimized clutch torques and relative speeds.

    Both trajectories have shape (n, 4); row k belongs to step k + 1,
    which covers (k dt, (k + 1) dt].
    """
    flags = engagement_flags(zeta_traj, phi_traj, torque_eps, speed_eps)
    patterns = [ClutchPattern(tuple(row)) for row in flags]
    schedule = schedule_from_step_patterns(patterns, dt)
    logger.debug("extracted schedule: %s", schedule)
    return schedule


def synthesize_signals(schedule: ModeSchedule, n: int, torque: float = 1.0,
                       speed: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Step-wise (zeta, phi) consistent with a schedule: engaged constraints carry
    `torque` and zero speed, released ones zero torque and `speed`.
    """
    dt = schedule.horizon / n
    engaged = np.array([p.engaged for p in schedule.step_patterns(n, dt)], dtype=bool)
    zeta = np.where(engaged, torque, 0.0)
    phi = np.where(engaged, 0.0, speed)
    return zeta, phi
