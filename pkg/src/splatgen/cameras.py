"""Pinhole cameras, world poses, lights, and keyframed motion paths.

Camera convention: right-handed, the camera looks down +z of its own
frame, x grows to the right and y (and pixel v) grows downward. A Pose
maps world points into that frame: ``p_cam = R @ p_world + t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    IDENTITY_QUAT,
    catmull_rom,
    matrix_to_quat,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    quat_to_matrix,
)


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform: p_cam = R(rotation) @ p + translation."""

    rotation: np.ndarray = None  # type: ignore[assignment]
    translation: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        rot = IDENTITY_QUAT.copy() if self.rotation is None else quat_normalize(self.rotation)
        trans = np.zeros(3) if self.translation is None else np.asarray(self.translation, dtype=float)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -quat_to_matrix(self.rotation).T @ self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map world point(s) (3,) or (N,3) into the camera frame."""
        return quat_rotate(self.rotation, points) + self.translation


def look_at_pose(eye: Sequence[float], target: Sequence[float], up: Sequence[float] = (0.0, 0.0, 1.0)) -> Pose:
    """Pose for a camera at ``eye`` looking at ``target`` with ``up`` roughly up."""
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    up = np.asarray(up, dtype=float)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("look_at target coincides with eye")
    z_c = forward / norm
    x_c = np.cross(z_c, up)
    xn = np.linalg.norm(x_c)
    if xn < 1e-9:
        # looking straight along up: pick any stable sideways axis
        x_c = np.cross(z_c, np.array([1.0, 0.0, 0.0]))
        xn = np.linalg.norm(x_c)
        if xn < 1e-9:
            x_c = np.cross(z_c, np.array([0.0, 1.0, 0.0]))
            xn = np.linalg.norm(x_c)
    x_c /= xn
    y_c = np.cross(z_c, x_c)
    r = np.stack([x_c, y_c, z_c])
    return Pose(rotation=matrix_to_quat(r), translation=-r @ eye)


def project_point(cam: PinholeCamera, pose: Pose, p: np.ndarray) -> tuple[float, float, float] | None:
    """Project a world point to (u, v, depth) pixels; None when behind the camera.

    Depth is the camera-frame forward coordinate; points at or in front of
    the near plane project, everything with z <= near returns None.
    """
    x, y, z = pose.to_camera(np.asarray(p, dtype=float))
    if z <= cam.near:
        return None
    return (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, z)


def project_points(cam: PinholeCamera, pose: Pose, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection: returns (uv (N,2), depth (N,), in_front (N,) bool)."""
    pc = pose.to_camera(np.asarray(points, dtype=float).reshape(-1, 3))
    z = pc[:, 2]
    in_front = z > cam.near
    zs = np.where(in_front, z, 1.0)  # placeholder denominators for culled points
    uv = np.stack([cam.fx * pc[:, 0] / zs + cam.cx, cam.fy * pc[:, 1] / zs + cam.cy], axis=-1)
    return uv, z, in_front


@dataclass(frozen=True)
class LightRig:
    """Directional or point light plus an ambient floor for the shadow pass."""

    kind: str = "directional"
    direction: np.ndarray = None  # type: ignore[assignment]  # propagation direction (toward the scene)
    position: np.ndarray = None  # type: ignore[assignment]
    color: np.ndarray = None  # type: ignore[assignment]
    intensity: float = 1.0
    ambient: float = 0.3

    def __post_init__(self) -> None:
        if self.kind not in ("directional", "point"):
            raise ValueError(f"unknown light kind {self.kind!r}")
        if self.intensity < 0:
            raise ValueError("intensity must be >= 0")
        if not (0.0 <= self.ambient <= 1.0):
            raise ValueError("ambient must be in [0, 1]")
        if self.kind == "directional":
            d = np.array([0.0, 0.0, -1.0]) if self.direction is None else np.asarray(self.direction, dtype=float)
            n = np.linalg.norm(d)
            if n == 0:
                raise ValueError("directional light needs a nonzero direction")
            object.__setattr__(self, "direction", d / n)
            object.__setattr__(self, "position", None)
        else:
            if self.position is None:
                raise ValueError("point light needs a position")
            object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
            object.__setattr__(self, "direction", None)
        color = np.ones(3) if self.color is None else np.clip(np.asarray(self.color, dtype=float), 0.0, 1.0)
        object.__setattr__(self, "color", color)


@dataclass(frozen=True)
class MotionPath:
    """Keyframed path over poses or lights, time-normalized to [0, 1].

    Keyframe times must be strictly increasing. Positions blend linearly or
    by Catmull-Rom (clamped phantom end knots); rotations and directions
    blend spherically. Queries outside the keyframe span clamp to the ends.
    """

    times: np.ndarray  # (K,)
    values: tuple  # K poses or K lights
    interpolation: str = "linear"

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("need at least one keyframe")
        if np.any(np.diff(times) <= 0):
            raise ValueError("keyframe times must be strictly increasing")
        if self.interpolation not in ("linear", "catmull-rom"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) != times.size:
            raise ValueError("times and values length mismatch")


def _segment(path: MotionPath, t: float) -> tuple[int, float]:
    times = path.times
    if t <= times[0]:
        return 0, 0.0
    if t >= times[-1]:
        return len(times) - 2 if len(times) > 1 else 0, 1.0
    i = int(np.searchsorted(times, t, side="right")) - 1
    u = (t - times[i]) / (times[i + 1] - times[i])
    return i, float(u)


def _spline_position(path: MotionPath, positions: list[np.ndarray], i: int, u: float) -> np.ndarray:
    if path.interpolation == "linear":
        return (1.0 - u) * positions[i] + u * positions[i + 1]
    n = len(positions)
    p0 = positions[max(i - 1, 0)]
    p3 = positions[min(i + 2, n - 1)]
    return catmull_rom(p0, positions[i], positions[i + 1], p3, u)


def sample_path(path: MotionPath, t: float):
    """Evaluate the path at time t in [0, 1]; returns a Pose or LightRig."""
    if len(path.values) == 1:
        return path.values[0]
    i, u = _segment(path, t)
    a, b = path.values[i], path.values[i + 1]
    if u == 0.0:
        return a
    if u == 1.0:
        return b
    if isinstance(a, Pose):
        centers = [v.camera_center() for v in path.values]
        center = _spline_position(path, centers, i, u)
        rot = quat_slerp(a.rotation, b.rotation, u)
        # rebuild world->camera translation from the blended camera center
        return Pose(rotation=rot, translation=-quat_to_matrix(rot) @ center)
    if isinstance(a, LightRig):
        return _blend_lights(path, i, u, a, b)
    raise TypeError(f"cannot interpolate values of type {type(a).__name__}")


def _blend_lights(path: MotionPath, i: int, u: float, a: LightRig, b: LightRig) -> LightRig:
    if a.kind != b.kind:
        raise ValueError("cannot blend lights of different kinds")
    color = (1.0 - u) * a.color + u * b.color
    intensity = (1.0 - u) * a.intensity + u * b.intensity
    ambient = (1.0 - u) * a.ambient + u * b.ambient
    if a.kind == "directional":
        dirs = [v.direction for v in path.values]
        d = _spline_position(path, dirs, i, u)
        return LightRig(kind="directional", direction=d, color=color, intensity=intensity, ambient=ambient)
    positions = [v.position for v in path.values]
    p = _spline_position(path, positions, i, u)
    return LightRig(kind="point", position=p, color=color, intensity=intensity, ambient=ambient)


def frame_time(frame_index: int, frame_count: int) -> float:
    """Normalized path time for frame i of N: i / (N - 1), 0 for a single frame."""
    if frame_count <= 1:
        return 0.0
    return frame_index / (frame_count - 1)
