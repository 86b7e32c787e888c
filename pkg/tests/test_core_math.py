import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hympc.core_math import (
    IntegrationError, omega_matrix, quat_conjugate, quat_derivative, quat_from_axis_angle,
    quat_multiply, quat_normalize, quat_rotate, quat_to_matrix, rk4_step,
)

finite = st.floats(-10, 10, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
quat = st.tuples(finite, finite, finite, finite).filter(
    lambda q: np.linalg.norm(q) > 1e-3).map(lambda q: quat_normalize(np.array(q)))


def test_identity_rotation_and_quarter_turn():
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(quat_rotate(np.array([1.0, 0, 0, 0]), v), v)
    q = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    assert np.allclose(quat_rotate(q, [1.0, 0, 0]), [0, 1, 0], atol=1e-15)


def test_hamilton_product_basis():
    i, j, k = (np.eye(4)[n] for n in (1, 2, 3))
    assert np.allclose(quat_multiply(i, j), k)
    assert np.allclose(quat_multiply(j, i), -k)
    assert np.allclose(quat_multiply(i, i), [-1, 0, 0, 0])


@given(quat, vec3)
def test_rotation_matches_matrix_oracle(q, v):
    assert np.allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12 * (1 + np.abs(v).max()))


@given(quat, quat, vec3)
def test_composition(a, b, v):
    lhs = quat_rotate(quat_multiply(a, b), v)
    rhs = quat_rotate(a, quat_rotate(b, v))
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(v).max()))


@given(quat)
def test_conjugate_is_inverse(q):
    assert np.allclose(quat_multiply(q, quat_conjugate(q)), [1, 0, 0, 0], atol=1e-12)


@given(quat, vec3)
def test_omega_matrix_is_right_product(q, w):
    assert np.allclose(omega_matrix(w) @ q, quat_multiply(q, np.concatenate([[0.0], w])),
                       atol=1e-12)
    # the rate is tangent to the unit sphere
    assert abs(q @ quat_derivative(q, w)) < 1e-10


def test_normalize_rejects_zero():
    with pytest.raises(ValueError):
        quat_normalize(np.zeros(4))


def test_rk4_exact_on_cubic():
    # x' = 3t^2 written autonomously on (x, t); RK4 is exact for cubics
    f = lambda s, _: np.array([3.0 * s[1] ** 2, 1.0])
    out = rk4_step(f, np.array([0.0, 0.0]), None, 0.7)
    assert np.allclose(out, [0.7 ** 3, 0.7], atol=1e-14)


def test_rk4_errors():
    with pytest.raises(ValueError):
        rk4_step(lambda s, _: s, np.ones(1), None, 0.0)
    with pytest.raises(IntegrationError):
        rk4_step(lambda s, _: s * np.inf, np.ones(1), None, 0.1)


def test_rk4_renormalizes_quaternion_block():
    f = lambda s, u: np.concatenate([[0.0], quat_derivative(s[1:], u)])
    x = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    out = rk4_step(f, x, np.array([3.0, -2.0, 1.0]), 0.2, quat_slice=slice(1, 5))
    assert abs(np.linalg.norm(out[1:]) - 1.0) < 1e-15
