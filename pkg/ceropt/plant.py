"""
Model of the two-joint BSA pendulum.

Every function here is a pure evaluation written with plain NumPy calls on
arrays whose LAST axis holds the components, so the same code serves
  - a single state            x.shape == (10,)
  - a batch of states         x.shape == (n, 10)
  - DualArray inputs          (derivatives through ceropt.autodiff)

Sign convention: `tau` is the spring torque K(theta - psi) acting on the spring
inertia, and the equation of motion reads

    Pi(xi) xi_dd + eta + tau_f - tau = C_p^T lambda

See docs/model.md for the derivation of M(q) and h(q, dq).
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from ceropt.autodiff import value_of
from ceropt.constants import PLANT_DEFAULTS, FRICTION_VELOCITY_SCALE, STATE_DIM

logger = logging.getLogger(__name__)


class ModelInputError(ValueError):
    """
    Raised when the plant model receives parameters or states it cannot evaluate.
    """


# symbol used in configs -> PlantParams field
PARAM_FIELDS = {
    "B_theta": "motor_inertia",
    "B_psi": "spring_inertia",
    "B_L": "link_inertia",
    "m_L": "link_mass",
    "r_L": "link_com",
    "l": "link_length",
    "K": "stiffness",
    "tau_C_q": "coulomb_link",
    "d_q": "visc_link",
    "tau_C_psi": "coulomb_spring",
    "d_psi": "visc_spring",
    "g": "gravity",
    "tau_m_max": "motor_torque_max",
    "theta_max": "joint_angle_max",
    "phi_max": "deflection_max",
    "tau_s_max": "spring_torque_max",
    "u_max": "motor_speed_max",
}


@dataclass(frozen=True, eq=False)
class PlantParams:
    """
    Physical constants of the pendulum plus kinematic lengths, gravity and limits.

    Per-joint quantities are arrays of shape (2,). Construction does not
    validate; call `validate_plant_params` (the config loader does).
    """
    motor_inertia: np.ndarray
    spring_inertia: np.ndarray
    link_inertia: np.ndarray
    link_mass: np.ndarray
    link_com: np.ndarray
    link_length: np.ndarray
    stiffness: np.ndarray
    coulomb_link: np.ndarray
    visc_link: np.ndarray
    coulomb_spring: np.ndarray
    visc_spring: np.ndarray
    gravity: float
    motor_torque_max: float
    joint_angle_max: float
    deflection_max: float
    spring_torque_max: np.ndarray
    motor_speed_max: float

    @classmethod
    def from_dict(cls, table: dict | None = None) -> PlantParams:
        """Build from symbol-keyed values, missing symbols taken from PLANT_DEFAULTS."""
        table = dict(table or {})
        unknown = sorted(set(table) - set(PARAM_FIELDS))
        if unknown:
            raise ModelInputError(f"unknown plant parameters: {unknown}")

        merged = {**PLANT_DEFAULTS, **table}
        kwargs = {}
        for symbol, field in PARAM_FIELDS.items():
            value = merged[symbol]
            if isinstance(PLANT_DEFAULTS[symbol], list):
                kwargs[field] = np.array(value, dtype=float)
            else:
                kwargs[field] = float(value)
        return cls(**kwargs)

    @classmethod
    def default(cls) -> PlantParams:
        return cls.from_dict()

    def to_dict(self) -> dict:
        out = {}
        for symbol, field in PARAM_FIELDS.items():
            value = getattr(self, field)
            out[symbol] = value.tolist() if isinstance(value, np.ndarray) else value
        return out

    def replace(self, **changes) -> PlantParams:
        return dataclasses.replace(self, **changes)


def validate_plant_params(params: PlantParams) -> PlantParams:
    """Check shapes, finiteness and signs; returns the params for chaining."""
    for symbol, field in PARAM_FIELDS.items():
        value = np.asarray(getattr(params, field), dtype=float)
        if isinstance(PLANT_DEFAULTS[symbol], list) and value.shape != (2,):
            raise ModelInputError(f"{symbol} must hold one value per joint, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise ModelInputError(f"{symbol} must be finite, got {value}")

    strictly_positive = [
        "B_theta", "B_psi", "B_L", "m_L", "r_L", "l", "K",
        "tau_m_max", "theta_max", "phi_max", "tau_s_max", "u_max",
    ]
    for symbol in strictly_positive:
        value = np.asarray(getattr(params, PARAM_FIELDS[symbol]))
        if np.any(value <= 0):
            raise ModelInputError(f"{symbol} must be strictly positive, got {value}")

    for symbol in ["tau_C_q", "d_q", "tau_C_psi", "d_psi", "g"]:
        value = np.asarray(getattr(params, PARAM_FIELDS[symbol]))
        if np.any(value < 0):
            raise ModelInputError(f"{symbol} must be non-negative, got {value}")

    return params


@dataclass(frozen=True, eq=False)
class HybridState:
    """
    Continuous state of the pendulum.

    x  = (theta, xi, dxi)  with  xi = (psi, q), dxi = (dpsi, dq)
    """
    theta: np.ndarray
    psi: np.ndarray
    q: np.ndarray
    dpsi: np.ndarray
    dq: np.ndarray

    @property
    def xi(self):
        return np.concatenate([self.psi, self.q], axis=-1)

    @property
    def dxi(self):
        return np.concatenate([self.dpsi, self.dq], axis=-1)

    def to_vector(self):
        return np.concatenate([self.theta, self.psi, self.q, self.dpsi, self.dq], axis=-1)

    @classmethod
    def from_vector(cls, x) -> HybridState:
        if x.shape[-1] != STATE_DIM:
            raise ModelInputError(f"state vector must have {STATE_DIM} entries, got shape {x.shape}")
        return cls(
            theta=x[..., 0:2],
            psi=x[..., 2:4],
            q=x[..., 4:6],
            dpsi=x[..., 6:8],
            dq=x[..., 8:10],
        )

    @classmethod
    def rest(cls) -> HybridState:
        """All-zero state: hanging straight down, no motion, no deflection."""
        return cls.from_vector(np.zeros(STATE_DIM))


@dataclass(frozen=True, eq=False)
class GeneralizedModelEval:
    """
    Terms of the constrained dynamics at one state (or a batch).

    Pi    : generalized mass matrix, blockdiag(diag(B_psi), M(q))
    eta   : (0; h(q, dq)) Coriolis/centrifugal and gravity
    tau   : (K(theta - psi); 0) spring torque on the spring inertia
    tau_f : friction torque, ordered like dxi
    """
    Pi: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    tau_f: np.ndarray

    @property
    def net_force(self):
        """eta + tau_f - tau, the generalized force the constraints must balance."""
        return self.eta + self.tau_f - self.tau


def as_vector(state) -> np.ndarray:
    if isinstance(state, HybridState):
        return state.to_vector()
    return state


def check_finite(value, name: str):
    raw = value_of(value)
    if not np.all(np.isfinite(raw)):
        raise ModelInputError(f"non-finite {name}: {raw}")


# ------------------------------------------------------------------
# Link block

def mass_matrix(params: PlantParams, q):
    """
    Link inertia M(q), shape (..., 2, 2).

      M11 = B1 + B2 + m1 r1^2 + m2 (l1^2 + r2^2 + 2 l1 r2 cos q2)
      M12 = B2 + m2 (r2^2 + l1 r2 cos q2)
      M22 = B2 + m2 r2^2
    """
    m11, m12, m22 = _mass_entries(params, q)
    row1 = np.stack([m11, m12], axis=-1)
    row2 = np.stack([m12, m22], axis=-1)
    return np.stack([row1, row2], axis=-2)


def _mass_entries(params: PlantParams, q):
    B1, B2 = params.link_inertia
    m1, m2 = params.link_mass
    r1, r2 = params.link_com
    l1 = params.link_length[0]
    c2 = np.cos(q[..., 1])

    m11 = B1 + B2 + m1 * r1 ** 2 + m2 * (l1 ** 2 + r2 ** 2 + 2.0 * l1 * r2 * c2)
    m12 = B2 + m2 * (r2 ** 2 + l1 * r2 * c2)
    # constant entry, broadcast to the batch shape
    m22 = (B2 + m2 * r2 ** 2) + 0.0 * c2
    return m11, m12, m22


def link_bias(params: PlantParams, q, dq):
    """h(q, dq): Coriolis/centrifugal plus gravity torques, shape (..., 2)."""
    m1, m2 = params.link_mass
    r1, r2 = params.link_com
    l1 = params.link_length[0]
    g = params.gravity

    s1 = np.sin(q[..., 0])
    s2 = np.sin(q[..., 1])
    s12 = np.sin(q[..., 0] + q[..., 1])
    dq1 = dq[..., 0]
    dq2 = dq[..., 1]

    coriolis1 = -m2 * l1 * r2 * s2 * (2.0 * dq1 * dq2 + dq2 ** 2)
    coriolis2 = m2 * l1 * r2 * s2 * dq1 ** 2
    gravity1 = m1 * g * r1 * s1 + m2 * g * (l1 * s1 + r2 * s12)
    gravity2 = m2 * g * r2 * s12

    return np.stack([coriolis1 + gravity1, coriolis2 + gravity2], axis=-1)


# ------------------------------------------------------------------
# Generalized quantities over xi = (psi, q)

def generalized_mass(params: PlantParams, xi):
    """Pi(xi), shape (..., 4, 4)."""
    m11, m12, m22 = _mass_entries(params, xi[..., 2:4])
    zero = 0.0 * m11
    b1 = params.spring_inertia[0] + zero
    b2 = params.spring_inertia[1] + zero
    rows = [
        np.stack([b1, zero, zero, zero], axis=-1),
        np.stack([zero, b2, zero, zero], axis=-1),
        np.stack([zero, zero, m11, m12], axis=-1),
        np.stack([zero, zero, m12, m22], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def mass_times(params: PlantParams, xi, v):
    """Pi(xi) @ v for v ordered like dxi, without forming Pi (works batched)."""
    m11, m12, m22 = _mass_entries(params, xi[..., 2:4])
    return np.stack([
        params.spring_inertia[0] * v[..., 0],
        params.spring_inertia[1] * v[..., 1],
        m11 * v[..., 2] + m12 * v[..., 3],
        m12 * v[..., 2] + m22 * v[..., 3],
    ], axis=-1)


def spring_torque(params: PlantParams, theta, psi):
    """K (theta - psi), shape (..., 2)."""
    return params.stiffness * (theta - psi)


def friction_torque(params: PlantParams, dxi):
    """
    Smoothed Coulomb plus viscous friction on (dpsi, dq):
        tau_C tanh(v / v_s) + d v
    """
    coulomb = np.concatenate([params.coulomb_spring, params.coulomb_link])
    viscous = np.concatenate([params.visc_spring, params.visc_link])
    return coulomb * np.tanh(dxi / FRICTION_VELOCITY_SCALE) + viscous * dxi


def net_force(params: PlantParams, x):
    """eta + tau_f - tau for a state vector (batched)."""
    h = link_bias(params, x[..., 4:6], x[..., 8:10])
    spring = spring_torque(params, x[..., 0:2], x[..., 2:4])
    return np.concatenate([-spring, h], axis=-1) + friction_torque(params, x[..., 6:10])


def eval_model(params: PlantParams, state) -> GeneralizedModelEval:
    """
    Pi, eta, tau and tau_f at a state (HybridState or vector, batched allowed).
    """
    x = as_vector(state)
    check_finite(x, "state")

    xi = x[..., 2:6]
    q = x[..., 4:6]
    h = link_bias(params, q, x[..., 8:10])
    spring = spring_torque(params, x[..., 0:2], x[..., 2:4])
    zero = 0.0 * h

    return GeneralizedModelEval(
        Pi=generalized_mass(params, xi),
        eta=np.concatenate([zero, h], axis=-1),
        tau=np.concatenate([spring, zero], axis=-1),
        tau_f=friction_torque(params, x[..., 6:10]),
    )


# ------------------------------------------------------------------
# End effector

def ee_kinematics(params: PlantParams, q, dq):
    """
    Planar forward kinematics of the link chain (q = 0 hangs down).

    Returns (position (..., 2), velocity (..., 2), jacobian (..., 2, 2)).
    """
    check_finite(q, "link position")
    check_finite(dq, "link velocity")
    l1, l2 = params.link_length
    s1 = np.sin(q[..., 0])
    c1 = np.cos(q[..., 0])
    s12 = np.sin(q[..., 0] + q[..., 1])
    c12 = np.cos(q[..., 0] + q[..., 1])

    position = np.stack([l1 * s1 + l2 * s12, -l1 * c1 - l2 * c12], axis=-1)

    j11 = l1 * c1 + l2 * c12
    j12 = l2 * c12
    j21 = l1 * s1 + l2 * s12
    j22 = l2 * s12
    jacobian = np.stack([
        np.stack([j11, j12], axis=-1),
        np.stack([j21, j22], axis=-1),
    ], axis=-2)

    velocity = np.stack([
        j11 * dq[..., 0] + j12 * dq[..., 1],
        j21 * dq[..., 0] + j22 * dq[..., 1],
    ], axis=-1)
    return position, velocity, jacobian


def ee_speed_squared(params: PlantParams, q, dq):
    _, velocity, _ = ee_kinematics(params, q, dq)
    return np.sum(velocity * velocity, axis=-1)


# ------------------------------------------------------------------
# Energy

def kinetic_energy(params: PlantParams, x):
    """1/2 dxi^T Pi dxi (the velocity-controlled motor carries no state energy)."""
    xi = x[..., 2:6]
    dxi = x[..., 6:10]
    return 0.5 * np.sum(dxi * mass_times(params, xi, dxi), axis=-1)


def potential_energy(params: PlantParams, x):
    """Gravity (zero at the hanging pose) plus spring energy 1/2 K (theta - psi)^2."""
    m1, m2 = params.link_mass
    r1, r2 = params.link_com
    l1 = params.link_length[0]
    g = params.gravity
    q1 = x[..., 4]
    q12 = x[..., 4] + x[..., 5]

    gravity = m1 * g * r1 * (1.0 - np.cos(q1)) + m2 * g * (l1 * (1.0 - np.cos(q1)) + r2 * (1.0 - np.cos(q12)))
    return gravity + spring_energy(params, x)


def spring_energy(params: PlantParams, x):
    deflection = x[..., 0:2] - x[..., 2:4]
    return 0.5 * np.sum(params.stiffness * deflection * deflection, axis=-1)


def total_energy(params: PlantParams, x):
    return kinetic_energy(params, x) + potential_energy(params, x)
