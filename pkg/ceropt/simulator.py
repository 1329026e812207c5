"""
Event-driven hybrid simulator.

Between scheduled switches the state follows

    x_dot = f_p(x, u) = (u; dxi; Pi^-1 (C_p^T lambda - eta - tau_f + tau))

with lambda the constraint torque keeping C_p dxi constant. At every switch
instant the integration stops, the reset map projects the velocities onto the
new constraint set, and integration restarts. Switching is time-scheduled;
there is no event detection.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from ceropt.autodiff import value_of
from ceropt.constants import SIMULATOR_DEFAULTS, STATE_DIM, CONTROL_DIM
from ceropt.modes import ClutchPattern, ModeSchedule, constraint_jacobian, validate_schedule
from ceropt.plant import (
    PlantParams,
    GeneralizedModelEval,
    HybridState,
    ModelInputError,
    eval_model,
    generalized_mass,
    as_vector,
)

logger = logging.getLogger(__name__)

# C_p Pi^-1 C_p^T is declared singular above this condition number
SINGULAR_COND = 1e12


class SingularConstraintError(ValueError):
    """
    Raised when C_p Pi^-1 C_p^T cannot be inverted.
    """


class SimulationError(RuntimeError):
    """
    Raised when the integrator fails; `last_time` is the last valid time reached.
    """

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last valid time {last_time:.6g}s)")
        self.last_time = last_time


def _delassus(Pi, C):
    """Return (Pi^-1 C^T, C Pi^-1 C^T), checking conditioning on the values."""
    Pinv_Ct = np.linalg.solve(Pi, C.T)
    S = C @ Pinv_Ct
    try:
        cond = np.linalg.cond(value_of(S))
    except np.linalg.LinAlgError:
        cond = math.inf
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularConstraintError(f"C_p Pi^-1 C_p^T is singular (condition number {cond:.3g})")
    return Pinv_Ct, S


def constraint_torque(model: GeneralizedModelEval, C: np.ndarray):
    """
    lambda = (C Pi^-1 C^T)^-1 C Pi^-1 (eta + tau_f - tau)

    The generalized force C^T lambda makes C xi_dd = 0. Empty C gives an empty lambda.
    """
    if C.shape[0] == 0:
        return np.zeros(0)
    _, S = _delassus(model.Pi, C)
    return np.linalg.solve(S, C @ np.linalg.solve(model.Pi, model.net_force))


def constrained_acceleration(model: GeneralizedModelEval, C: np.ndarray):
    """(xi_dd, lambda) under the bilateral constraints C."""
    lam = constraint_torque(model, C)
    force = -model.net_force
    if C.shape[0]:
        force = force + C.T @ lam
    return np.linalg.solve(model.Pi, force), lam


def continuous_dynamics(params: PlantParams, x, u, pattern: ClutchPattern):
    """f_p(x, u); works on DualArray inputs for linearization."""
    model = eval_model(params, x)
    ddxi, _ = constrained_acceleration(model, constraint_jacobian(pattern))
    return np.concatenate([u, x[6:10], ddxi])


def impact(model: GeneralizedModelEval, C_new: np.ndarray, dxi_minus):
    """
    Velocity jump when the constraints C_new engage.

        Lambda   = -(C Pi^-1 C^T)^-1 C dxi^-
        dxi^+    = dxi^- + Pi^-1 C^T Lambda

    dxi^+ is the Pi-metric projection of dxi^- onto {v : C v = 0}.
    """
    if C_new.shape[0] == 0:
        return dxi_minus, np.zeros(0)
    Pinv_Ct, S = _delassus(model.Pi, C_new)
    impulse = -np.linalg.solve(S, C_new @ dxi_minus)
    return dxi_minus + Pinv_Ct @ impulse, impulse


def _impact_on_state(params: PlantParams, x, pattern_new: ClutchPattern):
    Pi = generalized_mass(params, x[2:6])
    model = GeneralizedModelEval(Pi=Pi, eta=None, tau=None, tau_f=None)
    dxi_plus, impulse = impact(model, constraint_jacobian(pattern_new), x[6:10])
    return np.concatenate([x[0:6], dxi_plus]), impulse


def reset_map(params: PlantParams, state, pattern_new: ClutchPattern):
    """g_p: positions pass through, velocities are projected. Returns the input's type."""
    x_plus, _ = _impact_on_state(params, as_vector(state), pattern_new)
    if isinstance(state, HybridState):
        return HybridState.from_vector(x_plus)
    return x_plus


# ------------------------------------------------------------------
# Controls

class ZeroOrderHold:
    """
    Piecewise-constant control: values[k] is applied on [k dt, (k + 1) dt).
    """

    def __init__(self, values, horizon: float):
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[1] != CONTROL_DIM:
            raise ValueError(f"controls must have shape (n, {CONTROL_DIM}), got {self.values.shape}")
        self.horizon = float(horizon)
        self.dt = self.horizon / len(self.values)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.dt * np.arange(1, len(self.values))

    def index(self, t: float) -> int:
        k = int(math.floor(t / self.dt + 1e-9))
        return min(max(k, 0), len(self.values) - 1)

    def __call__(self, t: float, x=None) -> np.ndarray:
        return self.values[self.index(t)]

    def on_segment(self, a: float, b: float) -> Callable:
        """Constant law for [a, b]: the value of the step containing the segment midpoint."""
        u = self.values[self.index(0.5 * (a + b))]
        return lambda t, x=None: u


def zero_control(t: float, x=None) -> np.ndarray:
    return np.zeros(CONTROL_DIM)


def segment_control(control: Callable, a: float, b: float) -> Callable:
    """
    Control law used while integrating [a, b]. Controls exposing `on_segment`
    are held on the whole segment; anything else is evaluated pointwise.
    """
    on_segment = getattr(control, "on_segment", None)
    return control if on_segment is None else on_segment(a, b)


# ------------------------------------------------------------------
# Rollout

@dataclass
class ImpulseRecord:
    time: float
    impulse: np.ndarray
    pattern_before: ClutchPattern
    pattern_after: ClutchPattern
    state_minus: np.ndarray
    state_plus: np.ndarray


@dataclass
class Segment:
    t_start: float
    t_end: float
    first: int   # sample index range [first, last]
    last: int
    pattern: ClutchPattern
    # continuous extension of the integrator on [t_start, t_end], if available
    interpolant: Callable | None = field(default=None, repr=False)


@dataclass
class Rollout:
    """
    Sampled hybrid trajectory.

    A sample at a switch instant holds the post-reset state; the pre-reset
    state is kept in the impulse record.
    """
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    lambdas: list[np.ndarray]
    patterns: list[ClutchPattern]
    impulses: list[ImpulseRecord] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def state_at(self, t: float) -> np.ndarray:
        """
        State at t from the mode interval containing t (never across a reset):
        the integrator's dense output when kept, linear interpolation otherwise.
        """
        if not self.times[0] <= t <= self.times[-1]:
            raise ValueError(f"t={t} outside rollout range [{self.times[0]}, {self.times[-1]}]")
        segment = self._segment_at(t)
        if segment.interpolant is not None:
            return np.asarray(segment.interpolant(t), dtype=float)
        times = self.times[segment.first:segment.last + 1]
        states = self.states[segment.first:segment.last + 1]
        if len(times) == 1:
            return states[0].copy()
        return np.array([np.interp(t, times, states[:, j]) for j in range(STATE_DIM)])

    def _segment_at(self, t: float) -> Segment:
        # resets only happen between segments whose patterns differ; the later one owns t
        for segment in reversed(self.segments):
            if segment.t_start <= t:
                return segment
        return self.segments[0]

    def constraint_violation(self) -> float:
        """max over samples of |C_p dxi| for the active pattern."""
        worst = 0.0
        for x, pattern in zip(self.states, self.patterns):
            C = constraint_jacobian(pattern)
            if C.shape[0]:
                worst = max(worst, float(np.max(np.abs(C @ x[6:10]))))
        return worst


def _rk4(fun, t0: float, t1: float, y0: np.ndarray, step: float):
    n = max(1, int(math.ceil((t1 - t0) / step - 1e-9)))
    h = (t1 - t0) / n
    ts = [t0]
    ys = [y0]
    y = y0
    t = t0
    for _ in range(n):
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
        if not np.all(np.isfinite(y)):
            raise SimulationError("fixed-step integration produced non-finite values", ts[-1])
        ts.append(t)
        ys.append(y)
    ts[-1] = t1
    return np.array(ts), np.array(ys)


def _segment_times(schedule: ModeSchedule, control, T: float) -> list[float]:
    edges = {0.0, T, *schedule.switch_times}
    for t in getattr(control, "breakpoints", []):
        if 0.0 < t < T:
            edges.add(float(t))
    ordered = sorted(edges)
    # merge breakpoints that coincide with switches up to round-off
    merged = [ordered[0]]
    for t in ordered[1:]:
        if t - merged[-1] > 1e-12:
            merged.append(t)
        elif t in schedule.switch_times:
            merged[-1] = t
    return merged


def rollout(
    params: PlantParams,
    x0,
    control: Callable | np.ndarray | None,
    schedule: ModeSchedule,
    T: float | None = None,
    method: str = SIMULATOR_DEFAULTS["method"],
    atol: float = SIMULATOR_DEFAULTS["atol"],
    rtol: float = SIMULATOR_DEFAULTS["rtol"],
    fixed_step: float | None = SIMULATOR_DEFAULTS["fixed_step"],
    sample_dt: float | None = None,
) -> Rollout:
    """
    Integrate the hybrid dynamics over [0, T] under a time-scheduled mode signal.

    control: callable (t, x) -> u, an (n, 2) array held piecewise constant,
             or None for zero motor speed.
    sample_dt: when set, samples are taken on that uniform grid (plus every
             segment boundary) instead of at the integrator's accepted steps.
    """
    T = float(schedule.horizon if T is None else T)
    validate_schedule(schedule)
    if T > schedule.horizon + 1e-12:
        raise ValueError(f"rollout horizon {T} exceeds schedule horizon {schedule.horizon}")

    if control is None:
        control = zero_control
    elif not callable(control):
        control = ZeroOrderHold(control, T)

    x = np.array(as_vector(x0), dtype=float)
    if x.shape != (STATE_DIM,):
        raise ModelInputError(f"initial state must have {STATE_DIM} entries, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ModelInputError(f"non-finite initial state: {x}")

    edges = _segment_times(schedule, control, T)
    switch_set = set(schedule.switch_times)

    times, states, controls, patterns, segments, impulses = [], [], [], [], [], []

    pattern = schedule.pattern_at(0.0)
    x, impulse = _impact_on_state(params, x, pattern)
    if impulse.size and np.max(np.abs(impulse)) > 0:
        logger.debug("initial state projected onto %s, impulse %s", pattern, impulse)

    for seg_idx, (a, b) in enumerate(zip(edges, edges[1:])):
        if a in switch_set:
            new_pattern = schedule.pattern_at(a)
            x_plus, impulse = _impact_on_state(params, x, new_pattern)
            impulses.append(ImpulseRecord(
                time=a,
                impulse=impulse,
                pattern_before=pattern,
                pattern_after=new_pattern,
                state_minus=x.copy(),
                state_plus=x_plus.copy(),
            ))
            logger.debug("switch at t=%.6g: %s -> %s, impulse %s", a, pattern, new_pattern, impulse)
            x, pattern = x_plus, new_pattern

        seg_control = segment_control(control, a, b)

        def fun(t, y, _pattern=pattern, _control=seg_control):
            return continuous_dynamics(params, y, _control(t, y), _pattern)

        t_seg, y_seg, interpolant = _integrate(fun, a, b, x, method, atol, rtol, fixed_step, sample_dt)

        is_last = seg_idx == len(edges) - 2
        keep = len(t_seg) if is_last else len(t_seg) - 1
        first = len(times)
        times.extend(t_seg[:keep])
        states.extend(y_seg[:keep])
        patterns.extend([pattern] * keep)
        controls.extend(seg_control(t, y) for t, y in zip(t_seg[:keep], y_seg[:keep]))
        segments.append(Segment(a, b, first, first + keep - 1, pattern, interpolant))
        x = y_seg[-1].copy()

    times = np.array(times)
    states = np.array(states)
    controls = np.array(controls)
    lambdas = [
        constraint_torque(eval_model(params, y), constraint_jacobian(p))
        for y, p in zip(states, patterns)
    ]

    return Rollout(
        times=times,
        states=states,
        controls=controls,
        lambdas=lambdas,
        patterns=patterns,
        impulses=impulses,
        segments=segments,
    )


def _integrate(fun, a, b, y0, method, atol, rtol, fixed_step, sample_dt):
    if fixed_step is not None:
        t_seg, y_seg = _rk4(fun, a, b, y0, fixed_step)
        if sample_dt is None:
            return t_seg, y_seg, None
        t_eval = _sample_grid(a, b, sample_dt)
        return t_eval, np.array([np.interp(t_eval, t_seg, y_seg[:, j]) for j in range(STATE_DIM)]).T, None

    t_eval = None if sample_dt is None else _sample_grid(a, b, sample_dt)
    try:
        sol = solve_ivp(
            fun, (a, b), y0, method=method, atol=atol, rtol=rtol, t_eval=t_eval, dense_output=True
        )
    except ModelInputError as e:
        raise SimulationError(str(e), a) from e
    if sol.status == -1:
        last = float(sol.t[-1]) if len(sol.t) else a
        raise SimulationError(f"integration failed: {sol.message}", last)
    return sol.t, sol.y.T, sol.sol


def _sample_grid(a: float, b: float, dt: float) -> np.ndarray:
    k0 = int(math.ceil(a / dt - 1e-9))
    k1 = int(math.floor(b / dt + 1e-9))
    inner = [k * dt for k in range(k0, k1 + 1) if a + 1e-12 < k * dt < b - 1e-12]
    return np.array([a, *inner, b])


def node_deviation(result: Rollout, times, states, columns=slice(4, 6)) -> float:
    """
    max |x_rollout(t_k) - x_k| over the given nodes and state columns
    (link angles by default), e.g. against a transcription solution.
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    gaps = [
        np.max(np.abs(result.state_at(min(t, result.times[-1]))[columns] - x[columns]))
        for t, x in zip(times, states)
    ]
    return float(max(gaps))
