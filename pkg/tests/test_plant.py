# tests/test_plant.py

import numpy as np
import pytest

from ceropt.constants import PLANT_DEFAULTS, STATE_DIM
from ceropt.plant import (
    HybridState,
    ModelInputError,
    PlantParams,
    ee_kinematics,
    eval_model,
    generalized_mass,
    kinetic_energy,
    mass_matrix,
    potential_energy,
    spring_energy,
    validate_plant_params,
)
from ceropt.utils.finite_differences import central_jacobian


@pytest.fixture
def params():
    return PlantParams.default()


def sample_state(rng):
    x = rng.uniform(-1.0, 1.0, size=STATE_DIM)
    x[6:10] *= 3.0
    return x


def test_defaults_round_trip_through_dict(params):
    table = params.to_dict()
    assert set(table) == set(PLANT_DEFAULTS)
    again = PlantParams.from_dict(table)
    np.testing.assert_allclose(again.stiffness, params.stiffness)
    assert again.gravity == params.gravity


def test_unknown_parameter_is_rejected():
    with pytest.raises(ModelInputError, match="unknown plant parameters"):
        PlantParams.from_dict({"K": [1.0, 1.0], "stiffnes": 3})


@pytest.mark.parametrize("symbol,value", [
    ("K", [12.5, -1.0]),
    ("m_L", [0.0, 1.0]),
    ("g", -9.81),
    ("d_q", [0.1, -0.1]),
    ("B_L", [0.1, float("nan")]),
])
def test_validation_rejects_bad_values(symbol, value):
    with pytest.raises(ModelInputError):
        validate_plant_params(PlantParams.from_dict({symbol: value}))


def test_validation_rejects_wrong_joint_count():
    params = PlantParams.default().replace(stiffness=np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ModelInputError, match="one value per joint"):
        validate_plant_params(params)


def test_mass_matrices_are_symmetric_positive_definite(params):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = sample_state(rng)
        M = mass_matrix(params, x[4:6])
        Pi = generalized_mass(params, x[2:6])
        for A in (M, Pi):
            np.testing.assert_allclose(A, A.T)
            assert np.min(np.linalg.eigvalsh(A)) > 0
        np.testing.assert_allclose(Pi[2:, 2:], M)
        np.testing.assert_allclose(np.diag(Pi)[:2], params.spring_inertia)


def test_link_inertia_is_taken_about_the_center_of_mass(params):
    # the distal link rotates about its CoM plus the point mass m2 r2^2 about the joint
    B2, m2, r2 = PLANT_DEFAULTS["B_L"][1], PLANT_DEFAULTS["m_L"][1], PLANT_DEFAULTS["r_L"][1]
    M = mass_matrix(params, np.array([0.3, -0.7]))
    assert M[1, 1] == pytest.approx(B2 + m2 * r2 ** 2, rel=1e-12)
    assert B2 < m2 * r2 ** 2 < M[1, 1]


def test_batched_mass_matrix_matches_single(params):
    rng = np.random.default_rng(1)
    q = rng.normal(size=(5, 2))
    batched = mass_matrix(params, q)
    assert batched.shape == (5, 2, 2)
    np.testing.assert_allclose(batched[3], mass_matrix(params, q[3]))


def test_model_terms_at_rest(params):
    model = eval_model(params, HybridState.rest())
    assert not np.any(model.eta)
    assert not np.any(model.tau)
    assert not np.any(model.tau_f)
    assert not np.any(model.net_force)


def test_spring_torque_acts_on_spring_inertia(params):
    x = np.zeros(STATE_DIM)
    x[0] = 0.1  # theta1 ahead of psi1
    model = eval_model(params, x)
    np.testing.assert_allclose(model.tau, [params.stiffness[0] * 0.1, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(model.net_force, -model.tau)


def test_non_finite_state_is_rejected(params):
    x = np.zeros(STATE_DIM)
    x[5] = np.inf
    with pytest.raises(ModelInputError):
        eval_model(params, x)


def test_hybrid_state_vector_layout():
    x = np.arange(STATE_DIM, dtype=float)
    state = HybridState.from_vector(x)
    np.testing.assert_allclose(state.q, [4.0, 5.0])
    np.testing.assert_allclose(state.dxi, [6.0, 7.0, 8.0, 9.0])
    np.testing.assert_allclose(state.to_vector(), x)
    with pytest.raises(ModelInputError):
        HybridState.from_vector(np.zeros(4))


def test_ee_velocity_is_jacobian_times_link_speed(params):
    q = np.array([0.4, -0.7])
    dq = np.array([1.5, 2.0])
    position, velocity, J = ee_kinematics(params, q, dq)
    np.testing.assert_allclose(velocity, J @ dq)
    fd = central_jacobian(lambda v: ee_kinematics(params, v, dq)[0], q)
    np.testing.assert_allclose(J, fd, atol=1e-8)


def test_hanging_pose_positions(params):
    position, _, _ = ee_kinematics(params, np.zeros(2), np.zeros(2))
    np.testing.assert_allclose(position, [0.0, -np.sum(params.link_length)])


def test_energy_terms(params):
    x = np.zeros(STATE_DIM)
    assert potential_energy(params, x) == pytest.approx(0.0)
    x[1] = 0.2
    assert spring_energy(params, x) == pytest.approx(0.5 * params.stiffness[1] * 0.04)
    x[4] = 0.5
    assert potential_energy(params, x) > spring_energy(params, x)

    x[6:10] = [1.0, -2.0, 0.5, 0.3]
    Pi = generalized_mass(params, x[2:6])
    assert kinetic_energy(params, x) == pytest.approx(0.5 * x[6:10] @ Pi @ x[6:10])
