import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sceneplan.rotations import (
    heading_to_rot6d,
    matrix_to_rot6d,
    rot6d_to_matrix,
    yaw_to_rot6d,
)


def test_yaw_to_rot6d_zero_is_identity_columns():
    assert np.allclose(yaw_to_rot6d(0.0), [1, 0, 0, 0, 1, 0])


def test_yaw_to_rot6d_quarter_turn():
    c, s = math.cos(math.pi / 2), math.sin(math.pi / 2)
    assert np.allclose(yaw_to_rot6d(math.pi / 2), [c, s, 0, -s, c, 0], atol=1e-12)


def test_rot6d_recovers_rotation_matrix():
    yaw = 0.7
    r = rot6d_to_matrix(yaw_to_rot6d(yaw))
    expect = np.array([
        [math.cos(yaw), -math.sin(yaw), 0.0],
        [math.sin(yaw), math.cos(yaw), 0.0],
        [0.0, 0.0, 1.0],
    ])
    assert np.allclose(r, expect, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rot6d_orthonormal_right_handed(seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=6)
    # regenerate if the two halves are numerically parallel
    while np.linalg.norm(np.cross(phi[:3], phi[3:])) < 1e-6:
        phi = rng.normal(size=6)
    r = rot6d_to_matrix(phi)
    assert np.allclose(r.T @ r, np.eye(3), atol=1e-9)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matrix_to_rot6d_round_trip(seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=6)
    while np.linalg.norm(np.cross(phi[:3], phi[3:])) < 1e-6:
        phi = rng.normal(size=6)
    r = rot6d_to_matrix(phi)
    again = rot6d_to_matrix(matrix_to_rot6d(r))
    assert np.allclose(r, again, atol=1e-9)


def test_matrix_to_rot6d_takes_first_two_columns():
    r = rot6d_to_matrix(yaw_to_rot6d(1.1))
    phi = matrix_to_rot6d(r)
    assert np.allclose(phi[:3], r[:, 0])
    assert np.allclose(phi[3:], r[:, 1])


def test_rot6d_zero_norm_rejected():
    with pytest.raises(ValueError):
        rot6d_to_matrix(np.zeros(6))


def test_rot6d_parallel_halves_rejected():
    v = np.array([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        rot6d_to_matrix(np.concatenate([v, 2.0 * v]))


def test_rot6d_wrong_shape_rejected():
    with pytest.raises(ValueError):
        rot6d_to_matrix(np.ones(5))


def test_heading_to_rot6d_aligns_first_column():
    h = np.array([3.0, 4.0, 0.0])
    r = rot6d_to_matrix(heading_to_rot6d(h))
    assert np.allclose(r[:, 0], h / 5.0, atol=1e-12)
    assert np.allclose(r[:, 2], [0, 0, 1], atol=1e-12)


def test_heading_to_rot6d_ignores_vertical_component():
    r1 = rot6d_to_matrix(heading_to_rot6d([1.0, 2.0, 0.0]))
    r2 = rot6d_to_matrix(heading_to_rot6d([1.0, 2.0, 5.0]))
    assert np.allclose(r1, r2, atol=1e-12)


def test_heading_to_rot6d_rejects_vertical_only():
    with pytest.raises(ValueError):
        heading_to_rot6d([0.0, 0.0, 1.0])
