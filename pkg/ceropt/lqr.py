"""
Hybrid LQR tracking of a reference trajectory.

The feedback law is

    u(x, t) = theta_dot_ref(t) - R^-1 B(t)^T P(t) (x - x_ref(t))

with P(t) solved backward in time on every switch interval of the schedule,

    -P_dot = A^T P + P A - P S P + Q,      S = B R^-1 B^T,

starting from P(T) = P_T and restarting at each switch instant t_k with

    P(t_k^-) = (I + H)^T P(t_k^+) (I + H),     H = d/dx (g_p(x) - x) at x_ref(t_k^-).

A and B are the Jacobians of the mode dynamics f_p along the reference.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from sortedcontainers import SortedDict

from ceropt.autodiff import jacobian, jacobian_blocks
from ceropt.constants import LQR_DEFAULTS, STATE_DIM
from ceropt.modes import ClutchPattern, ModeSchedule
from ceropt.plant import PlantParams, as_vector
from ceropt import simulator
from ceropt.simulator import Rollout, continuous_dynamics, reset_map

logger = logging.getLogger(__name__)

FEEDBACK_VARIANTS = ("full", "xi")
XI = slice(2, 6)


class RiccatiDivergenceError(RuntimeError):
    """
    Raised when P(t) leaves the admissible range (norm cap, non-finite values,
    or an indefinite jump update) on a switch interval.
    """

    def __init__(self, message: str, interval: int):
        super().__init__(f"interval {interval}: {message}")
        self.interval = interval


# ------------------------------------------------------------------
# Reference

@dataclass
class Reference:
    """
    Open-loop trajectory to track: a rollout together with the motor-speed
    command that produced it and its mode schedule.

    x_ref comes from the rollout's continuous extension on each mode interval,
    so it is never interpolated across a reset; the pre-reset state at every
    switch is kept for left limits.
    """
    rollout: Rollout
    control: Callable
    schedule: ModeSchedule
    _pre_reset: dict[float, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self._pre_reset = {float(record.time): record.state_minus for record in self.rollout.impulses}

    @classmethod
    def from_controls(cls, params: PlantParams, x0, controls, schedule: ModeSchedule,
                      **rollout_kwargs) -> Reference:
        """Roll out stored (n, 2) zero-order-hold controls under a schedule."""
        hold = simulator.ZeroOrderHold(controls, schedule.horizon)
        ref = simulator.rollout(params, x0, hold, schedule, **rollout_kwargs)
        return cls(ref, hold, schedule)

    @property
    def horizon(self) -> float:
        return float(self.rollout.times[-1])

    @property
    def x0(self) -> np.ndarray:
        return self.rollout.states[0].copy()

    def state(self, t: float, interval: int | None = None) -> np.ndarray:
        """x_ref(t); pass `interval` to read the left limit at that interval's end."""
        if interval is not None and interval + 1 < self.schedule.n_intervals:
            end = float(self.schedule.boundaries()[interval + 1])
            if t >= end - 1e-12:
                return self.pre_reset_state(interval)
        return self.rollout.state_at(min(t, self.horizon))

    def pre_reset_state(self, k: int) -> np.ndarray:
        """x_ref just before switch k (between intervals k and k + 1)."""
        end = float(self.schedule.boundaries()[k + 1])
        if end in self._pre_reset:
            return self._pre_reset[end].copy()
        # switch beyond the rolled-out horizon
        return self.rollout.state_at(min(end, self.horizon))

    def feedforward(self, t: float, interval: int | None = None) -> np.ndarray:
        """theta_dot_ref(t)."""
        return np.asarray(self.control(t, self.state(t, interval)), dtype=float)


# ------------------------------------------------------------------
# Gain storage

@dataclass
class JumpRecord:
    time: float
    H: np.ndarray
    pattern_before: ClutchPattern | None = None
    pattern_after: ClutchPattern | None = None


class GainSchedule:
    """
    P(t) and K(t) = R^-1 B^T P(t) on every switch interval.

    Each interval keeps its own SortedDict: time -> (P, K), so lookups never
    blend values across a jump. Between stored times values are interpolated
    linearly.
    """

    def __init__(self, boundaries, R):
        self.boundaries = [float(t) for t in boundaries]
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.intervals: list[SortedDict] = [SortedDict() for _ in range(len(self.boundaries) - 1)]
        self.jumps: list[JumpRecord] = []

    @property
    def n_intervals(self) -> int:
        return len(self.intervals)

    @property
    def horizon(self) -> float:
        return self.boundaries[-1]

    def add(self, interval: int, t: float, P: np.ndarray, B: np.ndarray):
        """Store P at time t together with its gain."""
        P = 0.5 * (P + P.T)
        K = np.linalg.solve(self.R, B.T @ P)
        self.intervals[interval][float(t)] = (P, K)

    def interval_index(self, t: float) -> int:
        # the later interval owns its start, like ModeSchedule.pattern_at
        k = int(np.searchsorted(self.boundaries[1:-1], t, side="right"))
        return min(k, self.n_intervals - 1)

    def _lookup(self, t: float, interval: int | None, which: int) -> np.ndarray:
        k = self.interval_index(t) if interval is None else interval
        series = self.intervals[k]
        if not series:
            raise KeyError(f"no gains stored on interval {k}")

        pos = series.bisect_left(t)
        if pos == 0:
            return series.peekitem(0)[1][which]
        if pos == len(series):
            return series.peekitem(-1)[1][which]

        t_before, before = series.peekitem(pos - 1)
        t_after, after = series.peekitem(pos)
        w = (t - t_before) / (t_after - t_before)
        return (1.0 - w) * before[which] + w * after[which]

    def P(self, t: float, interval: int | None = None) -> np.ndarray:
        return self._lookup(t, interval, 0)

    def gain(self, t: float, interval: int | None = None) -> np.ndarray:
        return self._lookup(t, interval, 1)

    def times(self) -> np.ndarray:
        return np.concatenate([np.array(list(series.keys())) for series in self.intervals])

    def items(self):
        """(interval, t, P, K) over every stored point, in time order."""
        for k, series in enumerate(self.intervals):
            for t, (P, K) in series.items():
                yield k, t, P, K

    def max_asymmetry(self) -> float:
        return max(float(np.max(np.abs(P - P.T))) for _, _, P, _ in self.items())

    def min_eigenvalue(self) -> float:
        return min(float(np.min(np.linalg.eigvalsh(P))) for _, _, P, _ in self.items())

    def to_dict(self) -> dict:
        """Binary-free form: time grids and row-major matrices per interval."""
        return {
            "boundaries": self.boundaries,
            "R": self.R.tolist(),
            "intervals": [
                {
                    "times": list(series.keys()),
                    "P": [P.ravel().tolist() for P, _ in series.values()],
                    "K": [K.ravel().tolist() for _, K in series.values()],
                }
                for series in self.intervals
            ],
            "jumps": [
                {
                    "time": j.time,
                    "H": j.H.ravel().tolist(),
                    "modes_before": None if j.pattern_before is None else list(j.pattern_before.modes),
                    "modes_after": None if j.pattern_after is None else list(j.pattern_after.modes),
                }
                for j in self.jumps
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> GainSchedule:
        gains = cls(data["boundaries"], data["R"])
        for k, entry in enumerate(data["intervals"]):
            for t, P, K in zip(entry["times"], entry["P"], entry["K"]):
                n = int(round(np.sqrt(len(P))))
                gains.intervals[k][float(t)] = (
                    np.array(P, dtype=float).reshape(n, n),
                    np.array(K, dtype=float).reshape(-1, n),
                )
        for j in data.get("jumps", []):
            H = np.array(j["H"], dtype=float)
            n = int(round(np.sqrt(H.size)))
            gains.jumps.append(JumpRecord(
                time=float(j["time"]),
                H=H.reshape(n, n),
                pattern_before=None if j.get("modes_before") is None else ClutchPattern.from_modes(j["modes_before"]),
                pattern_after=None if j.get("modes_after") is None else ClutchPattern.from_modes(j["modes_after"]),
            ))
        return gains


# ------------------------------------------------------------------
# Jump sensitivity

def jump_sensitivity(params: PlantParams, state, pattern_new: ClutchPattern) -> np.ndarray:
    """
    H_p = d/dx (g_p(x) - x) at the pre-reset state.

    Position rows are zero. A switch that only releases constraints gives H_p = 0.
    """
    x = np.asarray(as_vector(state), dtype=float)
    return jacobian(lambda v: reset_map(params, v, pattern_new) - v, x)


def jump_sensitivity_general(params: PlantParams, x_minus, u, pattern_before: ClutchPattern,
                             pattern_after: ClutchPattern, guard_normal=None,
                             guard_rate: float = 0.0) -> np.ndarray:
    """
    Jump sensitivity for a switch triggered by a state guard s(x) = 0.

        Delta(x)   = g_p(x) - x
        Delta_dot  = dDelta/dx f_p(x^-, u)
        G          = (f_q(x^+, u) - f_p(x^-, u) - Delta_dot) grad_s^T
                     / (grad_s . dg_p/dx f_p(x^-, u) + guard_rate)
        H          = G dg_p/dx + dDelta/dx

    With `guard_normal=None` the switch is time-scheduled, G vanishes and the
    result equals `jump_sensitivity`. Only the first term of the time
    derivative of Delta is kept.
    """
    x_minus = np.asarray(as_vector(x_minus), dtype=float)
    u = np.asarray(u, dtype=float)
    d_delta = jump_sensitivity(params, x_minus, pattern_after)
    if guard_normal is None:
        return d_delta

    guard_normal = np.asarray(guard_normal, dtype=float)
    dg = np.eye(STATE_DIM) + d_delta
    x_plus = reset_map(params, x_minus, pattern_after)
    f_minus = continuous_dynamics(params, x_minus, u, pattern_before)
    f_plus = continuous_dynamics(params, x_plus, u, pattern_after)
    delta_dot = d_delta @ f_minus

    denominator = float(guard_normal @ (dg @ f_minus)) + guard_rate
    if abs(denominator) < 1e-14:
        raise ZeroDivisionError("trajectory is tangent to the switching guard")
    G = np.outer(f_plus - f_minus - delta_dot, guard_normal) / denominator
    return G @ dg + d_delta


# ------------------------------------------------------------------
# Riccati sweep

def validate_weights(Q, R, P_T) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accept diagonals or full matrices; all three must be symmetric positive definite."""
    out = []
    for name, M in (("Q", Q), ("R", R), ("P_T", P_T)):
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = np.diag(M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"{name} must be square, got shape {M.shape}")
        if not np.all(np.isfinite(M)) or np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
            raise ValueError(f"{name} must be finite and symmetric, got {M}")
        if np.min(np.linalg.eigvalsh(M)) <= 0:
            raise ValueError(f"{name} must be positive definite, eigenvalues {np.linalg.eigvalsh(M)}")
        out.append(M)
    Q, R, P_T = out
    if P_T.shape != Q.shape:
        raise ValueError(f"P_T has shape {P_T.shape}, Q has shape {Q.shape}")
    return Q, R, P_T


def integrate_riccati(linearization: Callable, Q, R, P_T, boundaries, jumps=None,
                      method: str = LQR_DEFAULTS["method"], atol: float = LQR_DEFAULTS["atol"],
                      rtol: float = LQR_DEFAULTS["rtol"],
                      p_norm_cap: float = LQR_DEFAULTS["p_norm_cap"]) -> GainSchedule:
    """
    Backward Riccati sweep over consecutive intervals.

    linearization(t, k) -> (A, B) on interval k.
    jumps[k] is H for the switch between intervals k and k + 1 (None means H = 0).
    P is stored at the integrator's accepted steps.
    """
    Q, R, P_T = validate_weights(Q, R, P_T)
    n = Q.shape[0]
    R_inv = np.linalg.inv(R)
    n_intervals = len(boundaries) - 1
    jumps = list(jumps) if jumps is not None else [None] * (n_intervals - 1)
    if len(jumps) != n_intervals - 1:
        raise ValueError(f"{n_intervals} intervals need {n_intervals - 1} jump matrices, got {len(jumps)}")

    gains = GainSchedule(boundaries, R)
    P_end = P_T

    for k in reversed(range(n_intervals)):
        a, b = boundaries[k], boundaries[k + 1]

        def rhs(t, y, _k=k):
            P = y.reshape(n, n)
            A, B = linearization(t, _k)
            S = B @ R_inv @ B.T
            return -(A.T @ P + P @ A - P @ S @ P + Q).ravel()

        def blow_up(t, y):
            return p_norm_cap - np.max(np.abs(y))
        blow_up.terminal = True

        sol = solve_ivp(rhs, (b, a), P_end.ravel(), method=method, atol=atol, rtol=rtol, events=blow_up)
        if sol.status == 1 or not np.all(np.isfinite(sol.y)):
            last = float(sol.t[-1]) if len(sol.t) else b
            raise RiccatiDivergenceError(
                f"|P| exceeded {p_norm_cap:.1e} at t={last:.6g}s on [{a:.6g}, {b:.6g}]", k,
            )
        if sol.status == -1:
            raise RiccatiDivergenceError(f"integration failed on [{a:.6g}, {b:.6g}]: {sol.message}", k)

        for t, y in zip(sol.t, sol.y.T):
            _, B = linearization(t, k)
            gains.add(k, t, y.reshape(n, n), B)
        P_start = gains.P(a, interval=k)
        logger.debug("[riccati] interval %d [%.4g, %.4g]: %d points, |P(start)| = %.3g",
                     k, a, b, len(sol.t), np.max(np.abs(P_start)))

        if k > 0:
            H = jumps[k - 1]
            if H is None:
                P_end = P_start
            else:
                I_H = np.eye(n) + H
                P_end = I_H.T @ P_start @ I_H
                P_end = 0.5 * (P_end + P_end.T)
                lowest = float(np.min(np.linalg.eigvalsh(P_end)))
                if lowest < -1e-10 * max(1.0, float(np.max(np.abs(P_end)))):
                    raise RiccatiDivergenceError(f"jump update at t={a:.6g}s lost PSD (eigenvalue {lowest:.3g})", k - 1)
                gains.jumps.append(JumpRecord(time=a, H=H))
    gains.jumps.reverse()
    return gains


def lqr_options(options: dict | None = None) -> dict:
    options = {**LQR_DEFAULTS, **(options or {})}
    if options["feedback"] not in FEEDBACK_VARIANTS:
        raise ValueError(f"feedback must be one of {FEEDBACK_VARIANTS}, got '{options['feedback']}'")
    return options


def riccati_sweep(params: PlantParams, reference: Reference, Q=None, R=None, P_T=None,
                  options: dict | None = None) -> GainSchedule:
    """
    Linearize f_p along the reference and run the hybrid Riccati sweep,
    with H_p from the reference's pre-reset state at every scheduled switch.
    """
    options = lqr_options(options)
    Q = options["Q"] if Q is None else Q
    R = options["R"] if R is None else R
    if P_T is None:
        P_T = Q if options["P_T"] is None else options["P_T"]
    schedule = reference.schedule
    boundaries = schedule.boundaries()
    boundaries[-1] = reference.horizon

    def linearization(t, k):
        pattern = schedule.patterns[k]
        x_ref = reference.state(t, interval=k)
        u_ref = reference.feedforward(t, interval=k)
        A, B = jacobian_blocks(lambda x, u: continuous_dynamics(params, x, u, pattern), x_ref, u_ref)
        return A, B

    jumps = [
        jump_sensitivity(params, reference.pre_reset_state(k), schedule.patterns[k + 1])
        for k in range(schedule.n_intervals - 1)
    ]
    gains = integrate_riccati(
        linearization, Q, R, P_T, boundaries, jumps,
        method=options["method"], atol=options["atol"], rtol=options["rtol"],
        p_norm_cap=options["p_norm_cap"],
    )
    for record, before, after in zip(gains.jumps, schedule.patterns, schedule.patterns[1:]):
        record.pattern_before, record.pattern_after = before, after
    logger.info("[riccati] %d intervals, %d stored points, %d jumps",
                gains.n_intervals, len(gains.times()), len(gains.jumps))
    return gains


# ------------------------------------------------------------------
# Feedback and tracking

def _correction(state, t: float, reference: Reference, gains: GainSchedule, variant: str,
                interval: int | None = None) -> np.ndarray:
    error = np.asarray(as_vector(state), dtype=float) - reference.state(t, interval)
    if variant == "xi":
        masked = np.zeros_like(error)
        masked[XI] = error[XI]
        error = masked
    return -gains.gain(t, interval) @ error


def feedback(state, t: float, reference: Reference, gains: GainSchedule,
             u_max: float | None = None, variant: str = "full") -> np.ndarray:
    """u = theta_dot_ref(t) - K(t) (x - x_ref(t)), clamped to +-u_max when given."""
    u = reference.feedforward(t) + _correction(state, t, reference, gains, variant)
    if u_max is not None:
        u = np.clip(u, -u_max, u_max)
    return u


class TrackingController:
    """
    Control callable (t, x) -> u for the simulator.

    On a simulator segment the reference command is held and the gains and
    x_ref are read on the segment's own switch interval, up to its end.
    """

    def __init__(self, reference: Reference, gains: GainSchedule, u_max: float | None = None,
                 variant: str = "full"):
        if variant not in FEEDBACK_VARIANTS:
            raise ValueError(f"feedback must be one of {FEEDBACK_VARIANTS}, got '{variant}'")
        self.reference = reference
        self.gains = gains
        self.u_max = u_max
        self.variant = variant

    @property
    def breakpoints(self):
        return getattr(self.reference.control, "breakpoints", [])

    def on_segment(self, a: float, b: float, clamp: bool = True) -> Callable:
        k = self.gains.interval_index(0.5 * (a + b))
        held = simulator.segment_control(self.reference.control, a, b)
        u_max = self.u_max if clamp else None

        def law(t, x):
            u = held(t, x) + _correction(x, t, self.reference, self.gains, self.variant, interval=k)
            return u if u_max is None else np.clip(u, -u_max, u_max)
        return law

    def __call__(self, t: float, x) -> np.ndarray:
        return feedback(x, t, self.reference, self.gains, self.u_max, self.variant)


def track(params: PlantParams, x0, reference: Reference, gains: GainSchedule,
          u_max: float | None = None, variant: str = "full", **rollout_kwargs) -> Rollout:
    """
    Closed-loop rollout. Switches happen at the reference's scheduled times;
    saturated samples are reported once at WARNING.
    """
    u_max = params.motor_speed_max if u_max is None else u_max
    controller = TrackingController(reference, gains, u_max, variant)
    closed = simulator.rollout(params, x0, controller, reference.schedule, reference.horizon, **rollout_kwargs)

    raw = []
    for segment in closed.segments:
        law = controller.on_segment(segment.t_start, segment.t_end, clamp=False)
        rows = slice(segment.first, segment.last + 1)
        raw.extend(law(t, x) for t, x in zip(closed.times[rows], closed.states[rows]))
    raw = np.array(raw)
    saturated = np.any(np.abs(raw) > u_max, axis=1)
    if np.any(saturated):
        logger.warning(
            "[track] motor speed saturated at %.4g rad/s on %d of %d samples, first at t=%.4gs",
            u_max, int(np.sum(saturated)), len(saturated), float(closed.times[np.argmax(saturated)]),
        )
    return closed


def open_loop(params: PlantParams, x0, reference: Reference, **rollout_kwargs) -> Rollout:
    """Replay the reference command from another initial state."""
    return simulator.rollout(params, x0, reference.control, reference.schedule, reference.horizon, **rollout_kwargs)


def tracking_error(rollout: Rollout, reference: Reference) -> np.ndarray:
    """|x(t) - x_ref(t)| at the rollout's samples."""
    return np.array([
        np.linalg.norm(x - reference.state(t)) for t, x in zip(rollout.times, rollout.states)
    ])


def feedforward_deviation(rollout: Rollout, reference: Reference) -> np.ndarray:
    """|u(t) - theta_dot_ref(t)| (max over motors) at the rollout's samples."""
    return np.array([
        np.max(np.abs(u - reference.feedforward(t))) for t, u in zip(rollout.times, rollout.controls)
    ])


def tracking_summary(closed: Rollout, reference: Reference, opened: Rollout | None = None) -> dict:
    err = tracking_error(closed, reference)
    summary = {
        "max_error": float(np.max(err)),
        "final_error": float(err[-1]),
        "max_feedback": float(np.max(feedforward_deviation(closed, reference))),
    }
    if opened is not None:
        open_err = tracking_error(opened, reference)
        summary["open_loop_max_error"] = float(np.max(open_err))
        summary["open_loop_final_error"] = float(open_err[-1])
    return summary
