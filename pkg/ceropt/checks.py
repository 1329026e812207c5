"""
Property battery run by `ceropt check`.

Each check evaluates one property of the model or the numerics on seeded
random samples and returns a CheckResult with the worst value seen and the
threshold it was compared against. Checks use the plant parameters as given,
without validation, so corrupted parameter sets can be examined.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd
import scipy.linalg
from tqdm.auto import tqdm

from ceropt.autodiff import jacobian_blocks
from ceropt.constants import STATE_DIM, N_CONSTRAINTS
from ceropt.lqr import integrate_riccati, jump_sensitivity
from ceropt.modes import ClutchPattern, ModeSchedule, all_patterns, constraint_jacobian, synthesize_signals
from ceropt.plant import (
    PlantParams,
    eval_model,
    generalized_mass,
    kinetic_energy,
    spring_energy,
    total_energy,
)
from ceropt.simulator import continuous_dynamics, impact, reset_map, rollout
from ceropt.transcription import (
    TranscriptionConfig,
    build_problem,
    complementarity_residuals,
    switching_term,
)
from ceropt.utils.finite_differences import central_jacobian, relative_error

logger = logging.getLogger(__name__)

# thresholds
GRADIENT_REL_TOL = 1e-5
IMPACT_TOL = 1e-10
IMPACT_CONSTRAINT_TOL = 1e-12
RICCATI_TOL = 1e-6
ENERGY_REL_TOL = 1e-10
ENERGY_HORIZON = 1.0  # seconds
SWITCH_COUNT_TOL = 0.1


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def random_states(rng: np.random.Generator, count: int, speed: float = 2.0, angle: float = 0.8) -> np.ndarray:
    """States with moderate angles and speeds, deflection inside +-0.2 rad."""
    x = np.zeros((count, STATE_DIM))
    x[:, 4:6] = rng.uniform(-angle, angle, (count, 2))
    x[:, 2:4] = rng.uniform(-angle, angle, (count, 2))
    x[:, 0:2] = x[:, 2:4] + rng.uniform(-0.2, 0.2, (count, 2))
    x[:, 6:10] = rng.uniform(-speed, speed, (count, 4))
    return x


# ------------------------------------------------------------------
# Model

def check_mass_matrix(params: PlantParams, rng, count: int = 100) -> CheckResult:
    xi = random_states(rng, count)[:, 2:6]
    lowest = float(np.min(np.linalg.eigvalsh(generalized_mass(params, xi))))
    return CheckResult("mass matrix positive definite", lowest > 0, lowest, 0.0, "min eigenvalue of Pi")


def check_energy(params: PlantParams, rng, count: int = 3, horizon: float = ENERGY_HORIZON) -> CheckResult:
    """
    Without friction and with the motors held, total energy is conserved in
    every mode; spring energy must never be negative. Rollouts run DOP853 at
    1e-13 over `horizon` seconds.
    """
    frictionless = params.replace(
        coulomb_link=np.zeros(2), visc_link=np.zeros(2),
        coulomb_spring=np.zeros(2), visc_spring=np.zeros(2),
    )
    worst_drift = 0.0
    patterns = [ClutchPattern.from_modes(m) for m in (("DEC", "DEC"), ("SEA", "STG"), ("STG", "SEA"))]
    for x0 in random_states(rng, count, speed=1.0, angle=0.4):
        for pattern in patterns:
            out = rollout(frictionless, x0, None, ModeSchedule.constant(pattern, horizon),
                          method="DOP853", atol=1e-13, rtol=1e-13)
            energy = total_energy(frictionless, out.states)
            scale = max(1.0, float(np.max(np.abs(energy))))
            worst_drift = max(worst_drift, float(np.max(np.abs(energy - energy[0]))) / scale)

    lowest_spring = float(np.min(spring_energy(params, random_states(rng, 100))))
    passed = worst_drift <= ENERGY_REL_TOL and lowest_spring >= 0.0
    return CheckResult(
        "energy conservation and spring energy", passed, worst_drift, ENERGY_REL_TOL,
        f"min spring energy {lowest_spring:.3g} J",
    )


# ------------------------------------------------------------------
# Impact law

def projection_oracle(Pi: np.ndarray, C: np.ndarray, v_minus: np.ndarray) -> np.ndarray:
    """argmin_v 1/2 (v - v^-)^T Pi (v - v^-) s.t. C v = 0, from its KKT system."""
    k = C.shape[0]
    if k == 0:
        return v_minus.copy()
    kkt = np.block([[Pi, C.T], [C, np.zeros((k, k))]])
    rhs = np.concatenate([Pi @ v_minus, np.zeros(k)])
    return scipy.linalg.solve(kkt, rhs)[:4]


def check_impact(params: PlantParams, rng, count: int = 100) -> CheckResult:
    worst = 0.0
    worst_constraint = 0.0
    energy_gain = 0.0
    for x in random_states(rng, count):
        model = eval_model(params, x)
        for pattern in all_patterns():
            C = constraint_jacobian(pattern)
            dxi_plus, _ = impact(model, C, x[6:10])
            oracle = projection_oracle(model.Pi, C, x[6:10])
            worst = max(worst, relative_error(dxi_plus, oracle))
            if C.shape[0]:
                worst_constraint = max(worst_constraint, float(np.max(np.abs(C @ dxi_plus))))
            x_plus = np.concatenate([x[:6], dxi_plus])
            gain = float(kinetic_energy(params, x_plus) - kinetic_energy(params, x))
            energy_gain = max(energy_gain, gain / max(1.0, float(kinetic_energy(params, x))))
    passed = worst <= IMPACT_TOL and worst_constraint <= IMPACT_CONSTRAINT_TOL and energy_gain <= 1e-12
    return CheckResult(
        "impact law vs projection oracle", passed, worst, IMPACT_TOL,
        f"max |C dxi+| {worst_constraint:.2e}, max relative KE gain {energy_gain:.2e}",
    )


# ------------------------------------------------------------------
# Derivatives

def check_dynamics_jacobian(params: PlantParams, rng, count: int = 20) -> CheckResult:
    worst = 0.0
    patterns = all_patterns()
    for x in random_states(rng, count):
        u = rng.uniform(-1.0, 1.0, 2)
        pattern = patterns[rng.integers(len(patterns))]
        A, B = jacobian_blocks(lambda xx, uu: continuous_dynamics(params, xx, uu, pattern), x, u)
        A_fd = central_jacobian(lambda xx: continuous_dynamics(params, xx, u, pattern), x)
        B_fd = central_jacobian(lambda uu: continuous_dynamics(params, x, uu, pattern), u)
        worst = max(worst, relative_error(A, A_fd), relative_error(B, B_fd))
    return CheckResult("dynamics Jacobian vs finite differences", worst <= GRADIENT_REL_TOL, worst, GRADIENT_REL_TOL)


def check_reset_jacobian(params: PlantParams, rng, count: int = 20) -> CheckResult:
    worst = 0.0
    patterns = all_patterns()
    for x in random_states(rng, count):
        pattern = patterns[rng.integers(len(patterns))]
        H = jump_sensitivity(params, x, pattern)
        H_fd = central_jacobian(lambda v: reset_map(params, v, pattern) - v, x)
        worst = max(worst, relative_error(H, H_fd))
    return CheckResult("reset-map Jacobian vs finite differences", worst <= GRADIENT_REL_TOL, worst, GRADIENT_REL_TOL)


def check_transcription_derivatives(params: PlantParams, cfg: TranscriptionConfig, rng,
                                    count: int = 3) -> CheckResult:
    """Objective gradient and constraint Jacobian of a 3-step transcription."""
    small = cfg.replace(n=3, T=3 * cfg.delta)
    problem = build_problem(params, small)
    base = problem.initial_point()
    worst = 0.0
    for _ in range(count):
        z = base + 1e-2 * rng.standard_normal(base.size)
        g_fd = central_jacobian(problem.objective, z)
        J_fd = central_jacobian(problem.constraints, z)
        worst = max(
            worst,
            relative_error(problem.gradient(z), g_fd),
            relative_error(problem.jacobian(z).toarray(), J_fd),
        )
    return CheckResult(
        "transcription derivatives vs finite differences", worst <= GRADIENT_REL_TOL, worst, GRADIENT_REL_TOL,
    )


# ------------------------------------------------------------------
# Riccati

def check_riccati() -> CheckResult:
    """
    Long-horizon LTI sweeps against the algebraic Riccati solution: the scalar
    integrator x_dot = u and a double integrator.
    """
    worst = 0.0
    cases = [
        (np.zeros((1, 1)), np.ones((1, 1)), np.eye(1), np.eye(1)),
        (np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(1)),
    ]
    for A, B, Q, R in cases:
        gains = integrate_riccati(lambda t, k, _A=A, _B=B: (_A, _B), Q, R, 2.0 * Q, [0.0, 50.0])
        oracle = scipy.linalg.solve_continuous_are(A, B, Q, R)
        worst = max(worst, relative_error(gains.P(0.0), oracle))
        if gains.max_asymmetry() > 1e-10 or gains.min_eigenvalue() < -1e-10:
            return CheckResult("Riccati sweep vs algebraic solution", False, worst, RICCATI_TOL, "P lost symmetry or PSD")
    return CheckResult("Riccati sweep vs algebraic solution", worst <= RICCATI_TOL, worst, RICCATI_TOL)


# ------------------------------------------------------------------
# Complementarity and switching penalty

def check_complementarity(rng, count: int = 100, eps: float = 1e-6) -> CheckResult:
    """
    Points built to satisfy the relaxed complementarity are accepted, and the
    same points with a released constraint carrying torque are rejected.
    """
    phi = rng.uniform(-1.0, 1.0, (count, N_CONSTRAINTS))
    phi[:, ::2] = 0.0                       # sticking constraints
    zeta = np.where(phi == 0.0, rng.uniform(-2.0, 2.0, phi.shape), 0.0)
    gamma = np.abs(phi)
    pi = np.maximum(zeta, 0.0)
    nu = np.maximum(-zeta, 0.0)
    feasible = complementarity_residuals(phi, pi, nu, gamma, eps)

    slipping_with_torque = complementarity_residuals(phi, pi + (phi > 0.0), nu + (phi < 0.0), gamma, eps)
    passed = feasible.satisfied() and not slipping_with_torque.satisfied()
    return CheckResult(
        "complementarity residuals", passed, feasible.violation(), 0.0,
        f"violation detected on perturbed points: {slipping_with_torque.violation():.3g}",
    )


def check_switch_count(cfg: TranscriptionConfig) -> CheckResult:
    """The smoothed switching penalty counts sign-pattern transitions of synthetic clutch torques."""
    n = 50
    worst = 0.0
    dt = 1.0 / n
    for m in (0, 1, 2, 5):
        engaged = ClutchPattern((True, False, False, False))
        released = ClutchPattern.disengaged()
        times = tuple((k + 1) * 8 * dt for k in range(m))
        patterns = tuple(engaged if k % 2 == 0 else released for k in range(m + 1))
        schedule = ModeSchedule(times, patterns, 1.0)
        zeta, _ = synthesize_signals(schedule, n, torque=1.0)
        count = float(np.sum(switching_term(zeta[:-1], zeta[1:], cfg.alpha, cfg.beta)))
        worst = max(worst, abs(count - m))
    return CheckResult("switching penalty counts transitions", worst <= SWITCH_COUNT_TOL, worst, SWITCH_COUNT_TOL)


# ------------------------------------------------------------------
# Battery

def default_checks(params: PlantParams, cfg: TranscriptionConfig, rng) -> list[tuple[str, Callable]]:
    return [
        ("mass", lambda: check_mass_matrix(params, rng)),
        ("energy", lambda: check_energy(params, rng)),
        ("impact", lambda: check_impact(params, rng)),
        ("dynamics-jacobian", lambda: check_dynamics_jacobian(params, rng)),
        ("reset-jacobian", lambda: check_reset_jacobian(params, rng)),
        ("transcription-derivatives", lambda: check_transcription_derivatives(params, cfg, rng)),
        ("riccati", lambda: check_riccati()),
        ("complementarity", lambda: check_complementarity(rng)),
        ("switch-count", lambda: check_switch_count(cfg)),
    ]


def run_checks(params: PlantParams, cfg: TranscriptionConfig | None = None, seed: int = 0,
               only: list[str] | None = None, progress: bool = True) -> list[CheckResult]:
    cfg = cfg or TranscriptionConfig()
    rng = np.random.default_rng(seed)
    battery = default_checks(params, cfg, rng)
    if only is not None:
        unknown = sorted(set(only) - {name for name, _ in battery})
        if unknown:
            raise ValueError(f"unknown checks: {unknown}")
        battery = [(name, fn) for name, fn in battery if name in only]

    results = []
    bar = tqdm(battery, desc="checks", unit="check", disable=not (progress and logger.isEnabledFor(logging.INFO)))
    for name, fn in bar:
        bar.set_postfix(check=name)
        try:
            result = fn()
        except Exception as e:
            logger.warning("[check] %s raised %s: %s", name, type(e).__name__, e)
            result = CheckResult(name, False, float("nan"), float("nan"), f"{type(e).__name__}: {e}")
        logger.info("[check] %-45s %s (%.3g vs %.3g)", result.name, "PASS" if result.passed else "FAIL",
                    result.value, result.threshold)
        results.append(result)
    bar.close()
    return results


def checks_frame(results: list[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "check": r.name,
            "status": "PASS" if r.passed else "FAIL",
            "value": r.value,
            "threshold": r.threshold,
            "detail": r.detail,
        }
        for r in results
    ])


def format_table(results: list[CheckResult]) -> str:
    return checks_frame(results).to_string(index=False)
