"""Quaternion math and similarity transforms shared across the pipeline.

Conventions used everywhere in this package:

- Quaternions are ``(w, x, y, z)`` arrays and are kept unit-norm.
- Rotation matrices act on column vectors; for point arrays of shape
  ``(N, 3)`` we compute ``points @ R.T``.
- A similarity transform maps a point ``p`` to ``scale * R @ p + translation``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return the unit quaternion(s) for ``q`` of shape (4,) or (N, 4)."""
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("cannot normalize a zero quaternion")
    return q / norm


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b; supports broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix/matrices for unit quaternion(s): (4,)->(3,3), (N,4)->(N,3,3)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.stack(
        [
            1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
            2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
            2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def quat_rotate(q: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rotate point(s) of shape (3,) or (N, 3) by a single quaternion."""
    r = quat_to_matrix(q)
    points = np.asarray(points, dtype=float)
    return points @ r.T


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Unit quaternion for a 3x3 rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        return IDENTITY_QUAT.copy()
    half = 0.5 * angle
    s = np.sin(half) / norm
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_slerp(a: np.ndarray, b: np.ndarray, u: float) -> np.ndarray:
    """Spherical-linear interpolation between unit quaternions, shortest path."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    dot = min(dot, 1.0)
    if dot > 1.0 - 1e-10:
        # nearly parallel: nlerp avoids 0/0
        out = a + u * (b - a)
        return quat_normalize(out)
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    wa = np.sin((1.0 - u) * theta) / sin_theta
    wb = np.sin(u * theta) / sin_theta
    return quat_normalize(wa * a + wb * b)


def random_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n rotations uniformly over the rotation group.

    Normalizing a 4D standard normal sample is uniform on the unit
    3-sphere, which double-covers the rotation group uniformly.
    """
    q = rng.normal(size=(n, 4))
    return quat_normalize(q)


def catmull_rom(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray, p3: np.ndarray, u: float) -> np.ndarray:
    """Uniform Catmull-Rom point between p1 and p2 at local parameter u in [0,1]."""
    u2 = u * u
    u3 = u2 * u
    return 0.5 * (
        (2.0 * p1)
        + (-p0 + p2) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3
    )


@dataclass(frozen=True)
class SimilarityTransform:
    """Uniform scale + rotation + translation: p -> scale * R(p) + translation."""

    scale: float = 1.0
    rotation: np.ndarray = None  # type: ignore[assignment]
    translation: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.scale <= 0.0:
            raise ValueError(f"similarity scale must be positive, got {self.scale}")
        rot = IDENTITY_QUAT.copy() if self.rotation is None else quat_normalize(self.rotation)
        trans = np.zeros(3) if self.translation is None else np.asarray(self.translation, dtype=float)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform()

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map point(s) of shape (3,) or (N, 3)."""
        return self.scale * quat_rotate(self.rotation, points) + self.translation

    def inverse(self) -> "SimilarityTransform":
        inv_rot = quat_conjugate(self.rotation)
        inv_scale = 1.0 / self.scale
        inv_trans = -inv_scale * quat_rotate(inv_rot, self.translation)
        return SimilarityTransform(scale=inv_scale, rotation=inv_rot, translation=inv_trans)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        return SimilarityTransform(
            scale=self.scale * other.scale,
            rotation=quat_multiply(self.rotation, other.rotation),
            translation=self.scale * quat_rotate(self.rotation, other.translation) + self.translation,
        )


def invert_similarity(t: SimilarityTransform) -> SimilarityTransform:
    """Inverse transform: composing with ``t`` round-trips points to identity."""
    return t.inverse()
