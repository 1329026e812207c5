"""
Constants used across the ceropt package.
"""

# ------------------------------------------------------------------
# System parameters of the BSA double pendulum (per joint j = 1, 2).
# Keys mirror the parameter symbols and are the keys accepted in the
# `plant` section of an experiment config.
#
# Link kinematic lengths `l` are not published with the prototype;
# they are chosen longer than the CoM distances and only enter
# end-effector quantities and the second link's lever arm. Speeds that
# depend on them are meaningful comparatively, not absolutely.
PLANT_DEFAULTS = {
    "B_theta":   [2.38e-5, 2.38e-5],  # motor inertia [kg m^2]
    "B_psi":     [6.20e-4, 6.15e-4],  # spring inertia [kg m^2]
    "B_L":       [1.12e-1, 4.4e-3],   # link inertia about the CoM, axis parallel to the joint axis [kg m^2]
    "m_L":       [9.92, 0.95],        # link mass [kg]
    "r_L":       [9.87e-2, 1.74e-1],  # link CoM distance [m]
    "l":         [0.25, 0.35],        # link kinematic length [m]
    "K":         [12.5, 14.5],        # spring stiffness [N m / rad]
    "tau_C_q":   [0.2, 0.6],          # link Coulomb friction [N m]
    "d_q":       [0.1, 0.08],         # link viscous damping [kg m^2 / s]
    "tau_C_psi": [0.2, 0.2],          # spring Coulomb friction [N m]
    "d_psi":     [0.1, 0.1],          # spring viscous damping [kg m^2 / s]
    "g":         9.81,                # gravity [m / s^2], q = 0 hangs straight down
    "tau_m_max": 10.0,                # motor torque bound [N m]
    "theta_max": 1.2,                 # joint angle range [rad]
    "phi_max":   0.3,                 # max spring deflection |theta - psi| [rad]
    "tau_s_max": [3.75, 4.35],        # max allowed spring torque [N m]
    "u_max":     4.5,                 # motor speed saturation [rad / s]
}
# ------------------------------------------------------------------

# Velocity scale of the smoothed Coulomb friction tanh(v / v_s)
FRICTION_VELOCITY_SCALE = 0.01  # [rad / s]

# ------------------------------------------------------------------
# Canonical orderings
#
#   state      x   = (theta1, theta2, psi1, psi2, q1, q2, dpsi1, dpsi2, dq1, dq2)
#   xi             = (psi1, psi2, q1, q2)
#   phi            = (dpsi1, dpsi1 - dq1, dpsi2, dpsi2 - dq2)
STATE_DIM = 10
CONTROL_DIM = 2
N_CONSTRAINTS = 4
STATE_LABELS = ["theta1", "theta2", "psi1", "psi2", "q1", "q2", "dpsi1", "dpsi2", "dq1", "dq2"]
# ------------------------------------------------------------------

# ------------------------------------------------------------------
# Mode extraction thresholds
MODE_TORQUE_EPS = 1e-3  # [N m]
MODE_SPEED_EPS = 1e-3   # [rad / s]
# ------------------------------------------------------------------

# ------------------------------------------------------------------
# Transcription defaults. Only the horizon T is published; the rest
# are tuning choices exposed through the config.
TRANSCRIPTION_DEFAULTS = {
    "n": 100,
    "T": 0.5,
    "w1": 1.0,
    "w2": 0.1,
    "w3": 1e-3,
    "alpha": 100.0,
    "beta": 500.0,
    "zeta_max": 50.0,
    "epsilon": 1e-1,
}
# ------------------------------------------------------------------

# ------------------------------------------------------------------
# Interior point solver defaults
SOLVER_DEFAULTS = {
    "backend": "interior-point",
    "eps_schedule": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
    "max_iter": 500,
    "tol": 1e-6,             # stationarity
    "feas_tol": 1e-8,        # primal feasibility
    "mu_init": 1e-1,
    "warm_start_mu": 1e-4,
    "bound_push": 1e-2,
    "warm_start_bound_push": 1e-6,
    "reg_init": 1e-8,        # first diagonal perturbation of the KKT system
    "reg_max": 1e20,
    "init_perturbation": 1e-3,  # seeded perturbation of the initial controls [rad / s]
}
# ------------------------------------------------------------------

# ------------------------------------------------------------------
# Simulator defaults: adaptive explicit 4(5) pair
SIMULATOR_DEFAULTS = {
    "method": "RK45",
    "atol": 1e-8,
    "rtol": 1e-8,
    "fixed_step": None,  # seconds; classic RK4 when set
}
# ------------------------------------------------------------------

# ------------------------------------------------------------------
# Hybrid LQR defaults. Q and R are diagonals; P_T defaults to Q.
LQR_DEFAULTS = {
    "Q": [1.0] * STATE_DIM,
    "R": [0.1, 0.1],
    "P_T": None,
    "feedback": "full",      # "full" state or "xi" (positions only)
    "method": "RK45",
    "p_norm_cap": 1e12,
    "atol": 1e-8,
    "rtol": 1e-8,
}
# ------------------------------------------------------------------

# ------------------------------------------------------------------
# Bundled scenarios. Each entry overrides the defaults above.
#
# "guessed" reproduces the pre-defined sequence: J1 SEA / J2 STG from
# the start, then J1 DEC / J2 SEA at t = 0.41 s.
SCENARIOS = {
    "speed-max-T0.5": {
        "transcription": {"n": 100, "T": 0.5},
    },
    "optimized": {
        "transcription": {"n": 100, "T": 0.5},
    },
    "guessed": {
        "transcription": {"n": 100, "T": 0.5},
        "schedule": {
            "switch_times": [0.41],
            "modes": [["SEA", "STG"], ["DEC", "SEA"]],
        },
    },
    "smoke": {
        "transcription": {"n": 2, "T": 0.01},
        "solver": {"eps_schedule": [1e-1, 1e-2], "max_iter": 100},
    },
}
DEFAULT_SCENARIO = "speed-max-T0.5"
# ------------------------------------------------------------------

# Version of the CSV artifact schema; readers reject any other value
CSV_SCHEMA_VERSION = 1

# Environment variable holding the CLI log level
LOG_ENV_VAR = "CEROPT_LOG"

# ------------------------------------------------------------------
# Initial-state offset applied by `ceropt track`, keyed by state label
PERTURBATION_DEFAULTS = {"q1": 0.05}  # [rad]
# ------------------------------------------------------------------

# Top-level keys of an experiment config file
CONFIG_SECTIONS = ["scenario", "plant", "transcription", "schedule", "solver", "lqr", "perturbation", "out", "seed"]
DEFAULT_OUT_DIR = "results"
DEFAULT_SEED = 0
