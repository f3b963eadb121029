"""Quaternion/rigid-transform math against scipy's Rotation as the oracle.

scipy stores quaternions as (x, y, z, w); ours are (w, x, y, z). The two
helpers below shuffle components at the boundary.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation, Slerp

from logsplat.rotations import (
    QUAT_IDENTITY,
    RigidTransform,
    look_at,
    matrix_to_quat,
    quat_from_axis_angle,
    quat_geodesic_angle,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    quat_to_matrix,
)


def to_scipy(q):
    return Rotation.from_quat(np.concatenate([q[1:], q[:1]]))


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def test_quat_to_matrix_matches_scipy():
    rng = np.random.default_rng(0)
    for q in random_unit_quats(rng, 200):
        np.testing.assert_allclose(quat_to_matrix(q), to_scipy(q).as_matrix(), atol=1e-12)


def test_quat_multiply_composes_rotations():
    rng = np.random.default_rng(1)
    qs = random_unit_quats(rng, 100)
    for a, b in zip(qs[:50], qs[50:]):
        got = quat_to_matrix(quat_multiply(a, b))
        want = quat_to_matrix(a) @ quat_to_matrix(b)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_quat_rotate_matches_matrix_action():
    rng = np.random.default_rng(2)
    qs = random_unit_quats(rng, 50)
    vs = rng.normal(size=(50, 3))
    for q, v in zip(qs, vs):
        np.testing.assert_allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12)


def test_matrix_to_quat_round_trip_including_trace_negative():
    rng = np.random.default_rng(3)
    cases = list(random_unit_quats(rng, 100))
    # 180-degree rotations exercise the trace <= 0 branches
    for axis in np.eye(3):
        cases.append(quat_from_axis_angle(axis, np.pi))
    for q in cases:
        q2 = matrix_to_quat(quat_to_matrix(q))
        assert q2[0] >= 0.0
        assert abs(abs(np.dot(q, q2)) - 1.0) < 1e-9  # same rotation up to sign


def test_quat_normalize_zero_gives_identity():
    np.testing.assert_array_equal(quat_normalize(np.zeros(4)), QUAT_IDENTITY)


def test_slerp_matches_scipy():
    rng = np.random.default_rng(4)
    qs = random_unit_quats(rng, 20)
    for q0, q1 in zip(qs[:10], qs[10:]):
        sl = Slerp([0.0, 1.0], Rotation.concatenate([to_scipy(q0), to_scipy(q1)]))
        for u in (0.0, 0.25, 0.5, 0.9, 1.0):
            ours = to_scipy(quat_slerp(q0, q1, u))
            angle = (ours.inv() * sl(u)).magnitude()
            assert angle < 1e-9


def test_slerp_takes_shortest_arc():
    q0 = QUAT_IDENTITY
    q1 = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.5)
    a = quat_slerp(q0, q1, 0.5)
    b = quat_slerp(q0, -q1, 0.5)  # same rotation, flipped sign
    assert quat_geodesic_angle(a, b) < 1e-12


def test_geodesic_angle_known_value():
    q = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.pi / 2)
    assert abs(quat_geodesic_angle(QUAT_IDENTITY, q) - np.pi / 2) < 1e-12


def test_rigid_transform_inverse_and_compose():
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = random_unit_quats(rng, 1)[0]
        t = rng.normal(size=3)
        tf = RigidTransform(q, t)
        pts = rng.normal(size=(10, 3))
        np.testing.assert_allclose(tf.inverse().apply(tf.apply(pts)), pts, atol=1e-10)

        q2 = random_unit_quats(rng, 1)[0]
        tf2 = RigidTransform(q2, rng.normal(size=3))
        np.testing.assert_allclose(
            tf.compose(tf2).matrix, tf.matrix @ tf2.matrix, atol=1e-12
        )
        np.testing.assert_allclose(
            tf.compose(tf2).apply(pts), tf.apply(tf2.apply(pts)), atol=1e-12
        )


def test_rigid_transform_matrix_is_rotation_part():
    q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.3)
    t = np.array([1.0, 2.0, 3.0])
    tf = RigidTransform(q, t)
    np.testing.assert_allclose(tf.matrix, quat_to_matrix(q), atol=1e-15)
    np.testing.assert_allclose(tf.apply(np.zeros(3)), t, atol=1e-15)


def test_look_at_axes():
    rng = np.random.default_rng(6)
    up = np.array([0.0, 0.0, 1.0])
    for _ in range(100):
        eye = rng.normal(size=3) * 5.0
        target = rng.normal(size=3) * 5.0
        if np.linalg.norm(target - eye) < 1e-3:
            continue
        tf = look_at(eye, target)
        r = quat_to_matrix(tf.rotation)
        assert abs(np.linalg.det(r) - 1.0) < 1e-9
        # target lands on the optical axis, in front
        p = tf.apply(target)
        assert p[2] > 0.0
        assert np.hypot(p[0], p[1]) < 1e-9
        # eye maps to the origin
        np.testing.assert_allclose(tf.apply(eye), 0.0, atol=1e-9)
        # roll fix: world up has no sideways (x) component and points
        # toward -y (image up), unless looking straight up/down
        fwd = (target - eye) / np.linalg.norm(target - eye)
        if abs(np.dot(fwd, up)) < 0.99:
            u_cam = r @ up
            assert abs(u_cam[0]) < 1e-9
            assert u_cam[1] < 0.0


def test_look_at_straight_down_uses_fallback():
    tf = look_at(np.array([0.0, 0.0, 5.0]), np.zeros(3))
    r = quat_to_matrix(tf.rotation)
    assert abs(np.linalg.det(r) - 1.0) < 1e-9
    p = tf.apply(np.zeros(3))
    assert p[2] > 0.0 and np.hypot(p[0], p[1]) < 1e-9


def test_from_axis_angle_zero_angle_is_exact_identity():
    q = quat_from_axis_angle(np.array([1.0, 2.0, 3.0]), 0.0)
    np.testing.assert_array_equal(q, QUAT_IDENTITY)
