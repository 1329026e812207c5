"""
Contact-implicit transcription of the speed-maximization problem.

Decision vector: n blocks of 28 entries, block k = 1..n holding

    x^k (10) | u^k (2) | zeta^k (4) | pi^k (4) | nu^k (4) | gamma^k (4)

u^k drives x^{k-1} -> x^k and zeta^k acts over the same step. x^0 is fixed.

Constraint rows of step k (34):

    dynamics defect            10   = 0
    zeta - pi + nu              4   = 0
    gamma + phi                 4   >= 0
    gamma - phi                 4   >= 0
    (gamma + phi) pi            4   <= eps
    (gamma - phi) nu            4   <= eps
    theta - psi                 2   in [-phi_max, phi_max]
    K (theta - psi)             2   in [-tau_s_max, tau_s_max]

Every row of step k only reads x^{k-1} and block k, and every objective term
only reads zeta^{k-1} and block k, so derivatives are evaluated step-locally
in one batched forward pass and scattered into sparse global matrices.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ceropt.autodiff import batch_jacobian, batch_hessian
from ceropt.constants import TRANSCRIPTION_DEFAULTS, STATE_DIM, CONTROL_DIM, N_CONSTRAINTS
from ceropt.modes import (
    ClutchPattern,
    ModeSchedule,
    engagement_indicator,
    extract_schedule,
    relative_speeds_of,
    validate_schedule,
)
from ceropt.plant import PlantParams, mass_times, net_force, ee_speed_squared, as_vector
from ceropt import simulator

logger = logging.getLogger(__name__)


class TranscriptionError(ValueError):
    """
    Raised for invalid transcription settings or an initial state outside the admissible set.
    """


# ------------------------------------------------------------------
# Layout

BLOCK_SIZE = 28
X = slice(0, 10)
U = slice(10, 12)
ZETA = slice(12, 16)
PI = slice(16, 20)
NU = slice(20, 24)
GAMMA_SLACK = slice(24, 28)

N_STEP_ROWS = 34
# row ranges inside a step
DEFECT_ROWS = slice(0, 10)
SPLIT_ROWS = slice(10, 14)
POS_ROWS = slice(14, 18)
NEG_ROWS = slice(18, 22)
POS_PRODUCT_ROWS = slice(22, 26)
NEG_PRODUCT_ROWS = slice(26, 30)
DEFLECTION_ROWS = slice(30, 32)
SPRING_TORQUE_ROWS = slice(32, 34)


@dataclass(frozen=True, eq=False)
class TranscriptionConfig:
    n: int = TRANSCRIPTION_DEFAULTS["n"]
    T: float = TRANSCRIPTION_DEFAULTS["T"]
    w1: float = TRANSCRIPTION_DEFAULTS["w1"]
    w2: float = TRANSCRIPTION_DEFAULTS["w2"]
    w3: float = TRANSCRIPTION_DEFAULTS["w3"]
    alpha: float = TRANSCRIPTION_DEFAULTS["alpha"]
    beta: float = TRANSCRIPTION_DEFAULTS["beta"]
    zeta_max: float = TRANSCRIPTION_DEFAULTS["zeta_max"]
    epsilon: float = TRANSCRIPTION_DEFAULTS["epsilon"]
    x0: np.ndarray = field(default_factory=lambda: np.zeros(STATE_DIM))

    @property
    def delta(self) -> float:
        return self.T / self.n

    @classmethod
    def from_dict(cls, section: dict | None = None, x0=None) -> TranscriptionConfig:
        section = dict(section or {})
        unknown = sorted(set(section) - set(TRANSCRIPTION_DEFAULTS) - {"x0"})
        if unknown:
            raise TranscriptionError(f"unknown transcription settings: {unknown}")
        merged = {**TRANSCRIPTION_DEFAULTS, **section}
        if x0 is not None:
            merged["x0"] = x0
        if "x0" in merged:
            merged["x0"] = np.array(as_vector(merged["x0"]), dtype=float)
        merged["n"] = int(merged["n"])
        return cls(**merged)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["x0"] = np.asarray(self.x0).tolist()
        return out

    def replace(self, **changes) -> TranscriptionConfig:
        return dataclasses.replace(self, **changes)


def validate_transcription_config(cfg: TranscriptionConfig) -> TranscriptionConfig:
    if cfg.n < 2:
        raise TranscriptionError(f"n must be at least 2, got {cfg.n}")
    if not cfg.T > 0:
        raise TranscriptionError(f"T must be positive, got {cfg.T}")
    for name in ["w1", "w2", "w3", "alpha", "beta", "zeta_max"]:
        value = getattr(cfg, name)
        if not (np.isfinite(value) and value > 0):
            raise TranscriptionError(f"{name} must be strictly positive, got {value}")
    if not (np.isfinite(cfg.epsilon) and cfg.epsilon >= 0):
        raise TranscriptionError(f"epsilon must be non-negative, got {cfg.epsilon}")
    x0 = np.asarray(cfg.x0)
    if x0.shape != (STATE_DIM,) or not np.all(np.isfinite(x0)):
        raise TranscriptionError(f"x0 must be a finite {STATE_DIM}-vector, got {x0}")
    return cfg


# ------------------------------------------------------------------
# Stage pieces (batched over the leading axis, DualArray friendly)

def clutch_generalized_torque(zeta):
    """sum_i Gamma_i^T zeta_i = (z1 + z2, z3 + z4, -z2, -z4)."""
    return np.stack([
        zeta[..., 0] + zeta[..., 1],
        zeta[..., 2] + zeta[..., 3],
        -zeta[..., 1],
        -zeta[..., 3],
    ], axis=-1)


def dynamics_defect(params: PlantParams, delta: float, x_prev, x_next, u, zeta):
    """
    Backward-Euler residual of one step (10 rows):

        theta' - theta - delta u
        xi'    - xi    - delta dxi'
        Pi(xi') (dxi' - dxi) + delta (eta' + tau_f' - tau' - sum_i Gamma_i^T zeta_i)

    All model terms are evaluated at the end of the step.
    """
    r_theta = x_next[..., 0:2] - x_prev[..., 0:2] - delta * u
    r_xi = x_next[..., 2:6] - x_prev[..., 2:6] - delta * x_next[..., 6:10]
    r_v = (
        mass_times(params, x_next[..., 2:6], x_next[..., 6:10] - x_prev[..., 6:10])
        + delta * (net_force(params, x_next) - clutch_generalized_torque(zeta))
    )
    return np.concatenate([r_theta, r_xi, r_v], axis=-1)


class ComplementarityResiduals(NamedTuple):
    """Each field must be >= 0 for feasibility."""
    gamma: np.ndarray
    pi: np.ndarray
    nu: np.ndarray
    positive_gap: np.ndarray     # gamma + phi
    negative_gap: np.ndarray     # gamma - phi
    positive_slack: np.ndarray   # eps - (gamma + phi) pi
    negative_slack: np.ndarray   # eps - (gamma - phi) nu

    def violation(self) -> float:
        return float(max(0.0, -min(float(np.min(r)) for r in self)))

    def satisfied(self, tol: float = 0.0) -> bool:
        return self.violation() <= tol


def complementarity_residuals(phi, pi, nu, gamma, eps: float) -> ComplementarityResiduals:
    if eps < 0:
        raise TranscriptionError(f"epsilon must be non-negative, got {eps}")
    phi, pi, nu, gamma = (np.asarray(a, dtype=float) for a in (phi, pi, nu, gamma))
    pos = gamma + phi
    neg = gamma - phi
    return ComplementarityResiduals(
        gamma=gamma,
        pi=pi,
        nu=nu,
        positive_gap=pos,
        negative_gap=neg,
        positive_slack=eps - pos * pi,
        negative_slack=eps - neg * nu,
    )


def speed_term(params: PlantParams, x):
    """-||J(q) dq||^2 at a state."""
    return -ee_speed_squared(params, x[..., 4:6], x[..., 8:10])


def switching_term(zeta_prev, zeta, alpha: float, beta: float):
    """Smoothed count of sign changes of sigma between consecutive steps (per step)."""
    s_prev = engagement_indicator(zeta_prev, alpha)
    s = engagement_indicator(zeta, alpha)
    return np.sum(0.5 * (1.0 + np.tanh(-beta * s_prev * s)), axis=-1)


def regularization_term(u):
    return np.sum(u * u, axis=-1)


def objective_terms(params: PlantParams, cfg: TranscriptionConfig, xs, us, zetas) -> dict:
    """
    Weighted terms of the objective for a trajectory.

    xs: (n, 10) or (n + 1, 10) states (only the last one is used),
    us: (n, 2), zetas: (n, 4).
    """
    xs, us, zetas = (np.asarray(a, dtype=float) for a in (xs, us, zetas))
    speed = cfg.w1 * float(speed_term(params, xs[-1]))
    switching = cfg.w2 * float(np.sum(switching_term(zetas[:-1], zetas[1:], cfg.alpha, cfg.beta)))
    regularization = cfg.w3 * float(np.sum(regularization_term(us)))
    return {
        "speed": speed,
        "switching": switching,
        "regularization": regularization,
        "total": speed + switching + regularization,
    }


def objective(params: PlantParams, cfg: TranscriptionConfig, xs, us, zetas) -> float:
    return objective_terms(params, cfg, xs, us, zetas)["total"]


# ------------------------------------------------------------------
# Problem

class Trajectory(NamedTuple):
    times: np.ndarray   # (n + 1,)
    xs: np.ndarray      # (n + 1, 10), xs[0] = x0
    us: np.ndarray      # (n, 2)
    zetas: np.ndarray   # (n, 4)
    pis: np.ndarray
    nus: np.ndarray
    gammas: np.ndarray

    @property
    def phis(self) -> np.ndarray:
        """Relative speeds of steps 1..n, shape (n, 4)."""
        return relative_speeds_of(self.xs[1:, 6:10])


class TranscriptionProblem:
    """
    NLP   min f(z)   s.t.  c_lower <= c(z) <= c_upper,  x_lower <= z <= x_upper

    Callbacks return dense vectors and scipy.sparse matrices.
    """

    def __init__(self, params: PlantParams, cfg: TranscriptionConfig,
                 fixed_schedule: ModeSchedule | None = None):
        self.params = params
        self.cfg = cfg
        self.fixed_schedule = fixed_schedule
        self.n = cfg.n
        self.delta = cfg.delta
        self.n_variables = BLOCK_SIZE * self.n
        self.n_constraints = N_STEP_ROWS * self.n

        self._not_first = np.ones(self.n)
        self._not_first[0] = 0.0
        self._is_last = np.zeros(self.n)
        self._is_last[-1] = 1.0

        self.x_lower, self.x_upper = self._variable_bounds()
        self.c_lower, self.c_upper = self._constraint_bounds(cfg.epsilon)
        self._build_sparsity()

    # -- bounds ------------------------------------------------------

    def _variable_bounds(self):
        p = self.params
        lower = np.full((self.n, BLOCK_SIZE), -np.inf)
        upper = np.full((self.n, BLOCK_SIZE), np.inf)

        lower[:, 0:2] = -p.joint_angle_max
        upper[:, 0:2] = p.joint_angle_max
        lower[:, U] = -p.motor_speed_max
        upper[:, U] = p.motor_speed_max
        lower[:, ZETA] = -self.cfg.zeta_max
        upper[:, ZETA] = self.cfg.zeta_max
        lower[:, PI] = 0.0
        upper[:, PI] = self.cfg.zeta_max
        lower[:, NU] = 0.0
        upper[:, NU] = self.cfg.zeta_max
        lower[:, GAMMA_SLACK] = 0.0

        if self.fixed_schedule is not None:
            engaged = np.array(
                [pat.engaged for pat in self.fixed_schedule.step_patterns(self.n, self.delta)], dtype=bool
            )
            # engaged: no slip allowed (gamma = 0 forces phi = 0)
            upper[:, GAMMA_SLACK][engaged] = 0.0
            # released: no clutch torque
            for sl in (PI, NU, ZETA):
                lower[:, sl][~engaged] = 0.0
                upper[:, sl][~engaged] = 0.0

        return lower.ravel(), upper.ravel()

    def _constraint_bounds(self, eps: float):
        p = self.params
        lower = np.zeros((self.n, N_STEP_ROWS))
        upper = np.zeros((self.n, N_STEP_ROWS))

        upper[:, POS_ROWS] = np.inf
        upper[:, NEG_ROWS] = np.inf
        lower[:, POS_PRODUCT_ROWS] = -np.inf
        upper[:, POS_PRODUCT_ROWS] = eps
        lower[:, NEG_PRODUCT_ROWS] = -np.inf
        upper[:, NEG_PRODUCT_ROWS] = eps
        lower[:, DEFLECTION_ROWS] = -p.deflection_max
        upper[:, DEFLECTION_ROWS] = p.deflection_max
        lower[:, SPRING_TORQUE_ROWS] = -p.spring_torque_max
        upper[:, SPRING_TORQUE_ROWS] = p.spring_torque_max
        return lower.ravel(), upper.ravel()

    def with_epsilon(self, eps: float) -> TranscriptionProblem:
        """Same problem at another relaxation level (only product-row bounds change)."""
        if eps < 0:
            raise TranscriptionError(f"epsilon must be non-negative, got {eps}")
        other = object.__new__(TranscriptionProblem)
        other.__dict__.update(self.__dict__)
        other.cfg = self.cfg.replace(epsilon=float(eps))
        other.c_lower, other.c_upper = self._constraint_bounds(eps)
        return other

    @property
    def epsilon(self) -> float:
        return self.cfg.epsilon

    # -- sparsity ----------------------------------------------------

    def _build_sparsity(self):
        n = self.n
        k = np.arange(n)

        # constraint stage: local inputs (x^{k-1} (10), block k (28))
        c_cols = np.concatenate([
            (k[:, None] - 1) * BLOCK_SIZE + np.arange(STATE_DIM)[None, :],
            k[:, None] * BLOCK_SIZE + np.arange(BLOCK_SIZE)[None, :],
        ], axis=1)                                   # (n, 38)
        c_valid = c_cols >= 0                         # x^0 is not a variable
        self._c_cols = c_cols
        self._c_valid = c_valid

        rows = k[:, None, None] * N_STEP_ROWS + np.arange(N_STEP_ROWS)[None, :, None]
        rows = np.broadcast_to(rows, (n, N_STEP_ROWS, c_cols.shape[1]))
        cols = np.broadcast_to(c_cols[:, None, :], rows.shape)
        mask = np.broadcast_to(c_valid[:, None, :], rows.shape)
        self._jac_rows = rows[mask]
        self._jac_cols = cols[mask]
        self._jac_mask = mask

        hr = np.broadcast_to(c_cols[:, :, None], (n, c_cols.shape[1], c_cols.shape[1]))
        hc = np.broadcast_to(c_cols[:, None, :], hr.shape)
        hmask = c_valid[:, :, None] & c_valid[:, None, :]
        self._c_hess_rows = hr[hmask]
        self._c_hess_cols = hc[hmask]
        self._c_hess_mask = hmask

        # objective stage: local inputs (zeta^{k-1} (4), block k (28))
        o_cols = np.concatenate([
            (k[:, None] - 1) * BLOCK_SIZE + ZETA.start + np.arange(N_CONSTRAINTS)[None, :],
            k[:, None] * BLOCK_SIZE + np.arange(BLOCK_SIZE)[None, :],
        ], axis=1)                                   # (n, 32)
        o_valid = o_cols >= 0
        self._o_cols = o_cols
        self._o_valid = o_valid
        hr = np.broadcast_to(o_cols[:, :, None], (n, o_cols.shape[1], o_cols.shape[1]))
        hc = np.broadcast_to(o_cols[:, None, :], hr.shape)
        hmask = o_valid[:, :, None] & o_valid[:, None, :]
        self._o_hess_rows = hr[hmask]
        self._o_hess_cols = hc[hmask]
        self._o_hess_mask = hmask

    # -- stage inputs ------------------------------------------------

    def _blocks(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_variables,):
            raise TranscriptionError(f"decision vector must have {self.n_variables} entries, got {z.shape}")
        return z.reshape(self.n, BLOCK_SIZE)

    def _constraint_inputs(self, z):
        blocks = self._blocks(z)
        x_prev = np.vstack([np.asarray(self.cfg.x0, dtype=float)[None, :], blocks[:-1, X]])
        return x_prev, blocks

    def _objective_inputs(self, z):
        blocks = self._blocks(z)
        zeta_prev = np.vstack([np.zeros((1, N_CONSTRAINTS)), blocks[:-1, ZETA]])
        return zeta_prev, blocks

    def _stage_constraints(self, x_prev, block):
        p = self.params
        x = block[:, X]
        zeta = block[:, ZETA]
        pi = block[:, PI]
        nu = block[:, NU]
        gamma = block[:, GAMMA_SLACK]

        defect = dynamics_defect(p, self.delta, x_prev, x, block[:, U], zeta)
        phi = relative_speeds_of(x[:, 6:10])
        pos = gamma + phi
        neg = gamma - phi
        deflection = x[:, 0:2] - x[:, 2:4]
        return np.concatenate([
            defect,
            zeta - pi + nu,
            pos,
            neg,
            pos * pi,
            neg * nu,
            deflection,
            p.stiffness * deflection,
        ], axis=-1)

    def _stage_objective(self, zeta_prev, block):
        cfg = self.cfg
        x = block[:, X]
        speed = cfg.w1 * speed_term(self.params, x) * self._is_last
        switching = cfg.w2 * switching_term(zeta_prev, block[:, ZETA], cfg.alpha, cfg.beta) * self._not_first
        regularization = cfg.w3 * regularization_term(block[:, U])
        return np.stack([speed, switching, regularization], axis=-1)

    # -- NLP callbacks -----------------------------------------------

    def objective(self, z) -> float:
        return float(np.sum(self._stage_objective(*self._objective_inputs(z))))

    def objective_breakdown(self, z) -> dict:
        terms = np.sum(self._stage_objective(*self._objective_inputs(z)), axis=0)
        return {
            "speed": float(terms[0]),
            "switching": float(terms[1]),
            "regularization": float(terms[2]),
            "total": float(np.sum(terms)),
        }

    def gradient(self, z) -> np.ndarray:
        _, jac = batch_jacobian(self._stage_objective, *self._objective_inputs(z))
        local = np.sum(jac, axis=1)                  # (n, 32)
        grad = np.zeros(self.n_variables)
        np.add.at(grad, self._o_cols[self._o_valid], local[self._o_valid])
        return grad

    def constraints(self, z) -> np.ndarray:
        return np.asarray(self._stage_constraints(*self._constraint_inputs(z))).ravel()

    def jacobian(self, z) -> sp.csr_matrix:
        _, jac = batch_jacobian(self._stage_constraints, *self._constraint_inputs(z))
        return sp.csr_matrix(
            (jac[self._jac_mask], (self._jac_rows, self._jac_cols)),
            shape=(self.n_constraints, self.n_variables),
        )

    def hessian(self, z, obj_factor: float, multipliers) -> sp.csr_matrix:
        """Hessian of obj_factor f + multipliers . c (full symmetric matrix)."""
        multipliers = np.asarray(multipliers, dtype=float).reshape(self.n, N_STEP_ROWS)
        x_prev, blocks = self._constraint_inputs(z)
        h_c = batch_hessian(self._stage_constraints, multipliers, x_prev, blocks)

        zeta_prev, blocks = self._objective_inputs(z)
        h_o = batch_hessian(self._stage_objective, np.full((self.n, 3), obj_factor), zeta_prev, blocks)

        data = np.concatenate([h_c[self._c_hess_mask], h_o[self._o_hess_mask]])
        rows = np.concatenate([self._c_hess_rows, self._o_hess_rows])
        cols = np.concatenate([self._c_hess_cols, self._o_hess_cols])
        return sp.coo_matrix((data, (rows, cols)), shape=(self.n_variables, self.n_variables)).tocsr()

    # -- helpers -----------------------------------------------------

    def initial_point(self, seed: int | None = None, perturbation: float = 0.0) -> np.ndarray:
        return initial_guess(self, seed=seed, perturbation=perturbation)

    def unpack(self, z) -> Trajectory:
        blocks = self._blocks(z)
        xs = np.vstack([np.asarray(self.cfg.x0, dtype=float)[None, :], blocks[:, X]])
        return Trajectory(
            times=self.delta * np.arange(self.n + 1),
            xs=xs,
            us=blocks[:, U].copy(),
            zetas=blocks[:, ZETA].copy(),
            pis=blocks[:, PI].copy(),
            nus=blocks[:, NU].copy(),
            gammas=blocks[:, GAMMA_SLACK].copy(),
        )

    def pack(self, traj: Trajectory) -> np.ndarray:
        blocks = np.zeros((self.n, BLOCK_SIZE))
        blocks[:, X] = traj.xs[1:]
        blocks[:, U] = traj.us
        blocks[:, ZETA] = traj.zetas
        blocks[:, PI] = traj.pis
        blocks[:, NU] = traj.nus
        blocks[:, GAMMA_SLACK] = traj.gammas
        return blocks.ravel()

    def max_defect(self, z) -> float:
        """Largest |row| among dynamics defects and the zeta split."""
        rows = self.constraints(z).reshape(self.n, N_STEP_ROWS)
        return float(np.max(np.abs(rows[:, 0:SPLIT_ROWS.stop])))

    def max_complementarity(self, z) -> float:
        """Largest complementarity product (gamma + phi) pi, (gamma - phi) nu."""
        rows = self.constraints(z).reshape(self.n, N_STEP_ROWS)
        return float(max(0.0, np.max(rows[:, POS_PRODUCT_ROWS.start:NEG_PRODUCT_ROWS.stop])))

    def constraint_violation(self, z) -> float:
        c = self.constraints(z)
        z = np.asarray(z, dtype=float)
        return float(max(
            np.max(np.maximum(self.c_lower - c, 0.0)),
            np.max(np.maximum(c - self.c_upper, 0.0)),
            np.max(np.maximum(self.x_lower - z, 0.0)),
            np.max(np.maximum(z - self.x_upper, 0.0)),
        ))

    def extract_schedule(self, z, **thresholds) -> ModeSchedule:
        traj = self.unpack(z)
        return extract_schedule(traj.zetas, traj.phis, self.delta, **thresholds)


def build_problem(params: PlantParams, cfg: TranscriptionConfig,
                  fixed_schedule: ModeSchedule | None = None) -> TranscriptionProblem:
    """
    Assemble the transcription.

    fixed_schedule: optimize a pre-defined mode sequence instead of letting
    the complementarity constraints choose it.
    """
    validate_transcription_config(cfg)
    x0 = np.asarray(cfg.x0, dtype=float)
    deflection = x0[0:2] - x0[2:4]
    if np.any(np.abs(x0[0:2]) > params.joint_angle_max):
        raise TranscriptionError(f"x0 motor positions {x0[0:2]} exceed theta_max={params.joint_angle_max}")
    if np.any(np.abs(deflection) > params.deflection_max):
        raise TranscriptionError(f"x0 spring deflection {deflection} exceeds phi_max={params.deflection_max}")
    if np.any(np.abs(params.stiffness * deflection) > params.spring_torque_max):
        raise TranscriptionError(f"x0 spring torque {params.stiffness * deflection} exceeds tau_s_max")
    if fixed_schedule is not None:
        validate_schedule(fixed_schedule)
        if abs(fixed_schedule.horizon - cfg.T) > 1e-12:
            raise TranscriptionError(
                f"fixed schedule horizon {fixed_schedule.horizon} differs from T={cfg.T}"
            )

    problem = TranscriptionProblem(params, cfg, fixed_schedule)
    logger.info(
        "transcription: n=%d, delta=%.4g s, %d variables, %d constraints%s",
        problem.n, problem.delta, problem.n_variables, problem.n_constraints,
        "" if fixed_schedule is None else f", fixed schedule {fixed_schedule}",
    )
    return problem


def initial_guess(problem: TranscriptionProblem, seed: int | None = None,
                  perturbation: float = 0.0) -> np.ndarray:
    """
    Physically consistent starting point.

    States come from a zero-control rollout (DEC/DEC, or the fixed schedule
    when there is one); clutch torques start at zero and gamma = |phi| + 0.1.
    A seeded perturbation of size `perturbation` is added to the controls.
    """
    cfg = problem.cfg
    schedule = problem.fixed_schedule or ModeSchedule.constant(ClutchPattern.disengaged(), cfg.T)
    reference = simulator.rollout(problem.params, cfg.x0, None, schedule, cfg.T, sample_dt=problem.delta)
    xs = np.array([reference.state_at(min(k * problem.delta, cfg.T)) for k in range(1, problem.n + 1)])

    rng = np.random.default_rng(seed)
    us = perturbation * rng.standard_normal((problem.n, CONTROL_DIM)) if perturbation else np.zeros((problem.n, CONTROL_DIM))

    phis = relative_speeds_of(xs[:, 6:10])
    traj = Trajectory(
        times=problem.delta * np.arange(problem.n + 1),
        xs=np.vstack([np.asarray(cfg.x0, dtype=float)[None, :], xs]),
        us=us,
        zetas=np.zeros((problem.n, N_CONSTRAINTS)),
        pis=np.zeros((problem.n, N_CONSTRAINTS)),
        nus=np.zeros((problem.n, N_CONSTRAINTS)),
        gammas=np.abs(phis) + 0.1,
    )
    z = problem.pack(traj)
    return np.clip(z, problem.x_lower, problem.x_upper)
