"""Quaternion and frame helpers.

Quaternions are stored as length-4 arrays in (x, y, z, w) order, matching
the on-disk corpus format. All rotations are world-frame active rotations:
``quat_to_rot(q) @ e`` maps a body axis ``e`` into the world frame.
"""

from __future__ import annotations

import numpy as np

WORLD_X = np.array([1.0, 0.0, 0.0])
WORLD_Y = np.array([0.0, 1.0, 0.0])
WORLD_Z = np.array([0.0, 0.0, 1.0])


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (x, y, z, w)."""
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(rot: np.ndarray) -> np.ndarray:
    """Quaternion (x, y, z, w) of a rotation matrix, canonical sign.

    Shepperd's method: branch on the largest diagonal term for numerical
    stability, then fix the overall sign so w >= 0 (first nonzero of
    x, y, z positive when w == 0).
    """
    m = rot
    t = np.trace(m)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s, 0.25 * s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s, (m[1, 0] - m[0, 1]) / s]
        )
    q /= np.linalg.norm(q)
    return canonical_sign(q)


def canonical_sign(q: np.ndarray) -> np.ndarray:
    """Flip q -> -q so that w > 0, breaking w == 0 ties deterministically."""
    for c in (q[3], q[0], q[1], q[2]):
        if c > 0.0:
            return q
        if c < 0.0:
            return -q
    return q


def quat_x_axis(q: np.ndarray) -> np.ndarray:
    return quat_to_rot(q)[:, 0]


def quat_y_axis(q: np.ndarray) -> np.ndarray:
    return quat_to_rot(q)[:, 1]


def quat_z_axis(q: np.ndarray) -> np.ndarray:
    return quat_to_rot(q)[:, 2]


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = normalize(np.asarray(axis, dtype=float))
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, np.cos(half)])


def frame_from_z(z_dir: np.ndarray, y_hint: np.ndarray = WORLD_Y) -> np.ndarray:
    """Orientation whose +z axis points along ``z_dir``.

    The remaining roll degree of freedom is fixed by aligning the frame's
    y axis as closely as possible to ``y_hint`` (world y by default). When
    ``z_dir`` is (anti)parallel to the hint the projection degenerates and
    world z is used as the fallback reference.
    """
    z_axis = normalize(np.asarray(z_dir, dtype=float))
    y_proj = y_hint - np.dot(y_hint, z_axis) * z_axis
    n = np.linalg.norm(y_proj)
    if n < 1e-12:
        y_proj = WORLD_Z - np.dot(WORLD_Z, z_axis) * z_axis
        n = np.linalg.norm(y_proj)
    y_axis = y_proj / n
    x_axis = np.cross(y_axis, z_axis)
    rot = np.column_stack([x_axis, y_axis, z_axis])
    return rot_to_quat(rot)


def angle_between_z_axes(q_a: np.ndarray, q_b: np.ndarray) -> float:
    """Angle in [0, pi] between the z axes of two orientations (roll-blind)."""
    c = float(np.dot(quat_z_axis(q_a), quat_z_axis(q_b)))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
