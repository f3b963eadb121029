"""Quaternion and rigid-transform math.

Conventions (fixed once, used everywhere in this package):
  * quaternions are (w, x, y, z), Hamilton product, and rotate vectors as
    v' = q v q*  (i.e. ``quat_to_matrix(q) @ v``)
  * the world frame is right-handed with +z up
  * a RigidTransform maps points as x -> R x + t
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize to unit length. Zero-norm quaternions map to identity."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    out = np.where(n > 0.0, q / np.where(n == 0.0, 1.0, n), QUAT_IDENTITY)
    return out


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b (apply b's rotation, then a's)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion; supports batch shapes (..., 4)."""
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) of a rotation matrix, Shepperd's method."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        if i == 0:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    half = 0.5 * angle_rad
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors (..., 3) by quaternion(s) (..., 4)."""
    m = quat_to_matrix(q)
    return np.einsum("...ij,...j->...i", m, np.asarray(v, dtype=np.float64))


def quat_slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation between two unit quaternions."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    # q and -q are the same rotation; take the short way around.
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(q0 + t * (q1 - q0))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize((np.sin((1.0 - t) * theta) / s) * q0 + (np.sin(t * theta) / s) * q1)


def quat_geodesic_angle(q0: np.ndarray, q1: np.ndarray) -> float:
    """Rotation angle (radians) taking q0 to q1, in [0, pi]."""
    d = abs(float(np.dot(quat_normalize(q0), quat_normalize(q1))))
    return 2.0 * np.arccos(np.clip(d, -1.0, 1.0))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform x -> R(rotation) x + translation."""

    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat_normalize(np.asarray(self.rotation, dtype=np.float64)))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(QUAT_IDENTITY.copy(), np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix part."""
        return quat_to_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.matrix.T + self.translation

    def apply_direction(self, dirs: np.ndarray) -> np.ndarray:
        return np.asarray(dirs, dtype=np.float64) @ self.matrix.T

    def inverse(self) -> "RigidTransform":
        q_inv = quat_conjugate(self.rotation)
        return RigidTransform(q_inv, -quat_rotate(q_inv, self.translation))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other)(x) == self(other(x))."""
        return RigidTransform(
            quat_multiply(self.rotation, other.rotation),
            quat_rotate(self.rotation, other.translation) + self.translation,
        )

    def almost_equal(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        ang = quat_geodesic_angle(self.rotation, other.rotation)
        return ang <= tol and bool(np.all(np.abs(self.translation - other.translation) <= tol))


def look_at(eye: np.ndarray, target: np.ndarray, up_hint: np.ndarray | None = None) -> RigidTransform:
    """World-to-camera transform for a camera at ``eye`` looking at ``target``.

    Camera axes: +x right, +y down, +z forward. Roll is fixed so that the
    world up direction (+z by default) projects upward in the image. Falls
    back to +x as the up hint when the view direction is within ~2.5 deg of
    vertical.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n == 0.0:
        raise ValueError("look_at target coincides with eye")
    fwd = fwd / n
    up = np.array([0.0, 0.0, 1.0]) if up_hint is None else np.asarray(up_hint, dtype=np.float64)
    if abs(float(np.dot(fwd, up))) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    down /= np.linalg.norm(down)
    rot = np.stack([right, down, fwd], axis=0)  # rows: world -> camera
    return RigidTransform(matrix_to_quat(rot), -rot @ eye)
