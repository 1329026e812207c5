# tests/test_autodiff.py

import numpy as np
import pytest

from ceropt.autodiff import (
    DualArray,
    UnregisteredPrimitiveError,
    batch_jacobian,
    ensure_registered,
    hessian,
    jacobian,
    jacobian_blocks,
    seed,
    value_and_jacobian,
)
from ceropt.utils.finite_differences import central_jacobian


def rosenbrock(x):
    return (1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2


def test_elementwise_rules_match_closed_form():
    x = np.array([0.3, -1.2, 2.0])
    J = jacobian(lambda v: np.sin(v) * np.exp(v) + np.tanh(v), x)
    expected = np.diag(np.cos(x) * np.exp(x) + np.sin(x) * np.exp(x) + 1.0 - np.tanh(x) ** 2)
    np.testing.assert_allclose(J, expected, atol=1e-14)


def test_matmul_and_solve_match_finite_differences():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
    x = rng.normal(size=4)

    def f(v):
        M = A + np.stack([v, v, v, v]) * 0.1
        return np.linalg.solve(M, v) + A @ v

    np.testing.assert_allclose(jacobian(f, x), central_jacobian(f, x), rtol=1e-6, atol=1e-8)


def test_jacobian_blocks_split_by_input():
    a = np.array([1.0, 2.0])
    b = np.array([3.0])
    Ja, Jb = jacobian_blocks(lambda u, v: u * v, a, b)
    np.testing.assert_allclose(Ja, np.diag([3.0, 3.0]))
    np.testing.assert_allclose(Jb, [[1.0], [2.0]])


def test_constant_output_has_zero_jacobian():
    value, J = value_and_jacobian(lambda v: np.ones(3), np.zeros(2))
    np.testing.assert_allclose(value, np.ones(3))
    assert J.shape == (3, 2)
    assert not np.any(J)


def test_batch_jacobian_rows_are_independent():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    value, J = batch_jacobian(lambda v: v * v, x)
    np.testing.assert_allclose(value, x ** 2)
    np.testing.assert_allclose(J[1], np.diag([6.0, 8.0]))


def test_hessian_of_rosenbrock():
    x = np.array([-1.2, 1.0])
    H = hessian(rosenbrock, x)
    expected = np.array([
        [2.0 - 400.0 * (x[1] - 3.0 * x[0] ** 2), -400.0 * x[0]],
        [-400.0 * x[0], 200.0],
    ])
    np.testing.assert_allclose(H, expected, rtol=1e-6)
    np.testing.assert_allclose(H, H.T)


def test_unregistered_primitive_raises():
    (d,) = seed(np.array([0.5, 0.2]))
    with pytest.raises(UnregisteredPrimitiveError):
        np.arctan(d)
    with pytest.raises(UnregisteredPrimitiveError):
        ensure_registered(["sin", "arctan2"])


def test_tangent_shape_is_validated():
    with pytest.raises(ValueError):
        DualArray(np.zeros(3), np.zeros((2, 1)))
