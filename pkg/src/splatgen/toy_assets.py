"""Procedural toy asset bundle: self-contained inputs for the full pipeline
without any captured data.

Two objects (a Gaussian-shell sphere and a box) plus a flat environment
splat, each with a matching analytic mesh, and a ready-to-run project
config. Generation is fully deterministic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .meshes import box_mesh, save_obj, uv_sphere_mesh
from .sh import NUM_COEFFS, rgb_to_dc
from .splats import SplatCloud, save_splat_ply

BALL_RADIUS = 0.055
BOX_SIZE = (0.11, 0.085, 0.065)


def _cloud_from_surface(
    points: np.ndarray,
    colors: np.ndarray,
    scale: float,
    opacity: float = 0.95,
) -> SplatCloud:
    n = points.shape[0]
    sh = np.zeros((n, 3, NUM_COEFFS))
    sh[:, :, 0] = rgb_to_dc(colors)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    return SplatCloud(
        means=points,
        scales=np.full((n, 3), scale),
        rotations=rotations,
        opacities=np.full(n, opacity),
        sh=sh,
    )


def _fibonacci_sphere(n: int, radius: float) -> np.ndarray:
    i = np.arange(n, dtype=float)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    z = (1.0 - (2.0 * i + 1.0) / n) * radius
    r = np.sqrt(np.maximum(0.0, radius * radius - z * z))
    phi = 2.0 * np.pi * i / golden
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def toy_ball_splat(n: int = 1400) -> SplatCloud:
    """Shell of splats on a sphere, warm red with a simple vertical tint."""
    pts = _fibonacci_sphere(n, BALL_RADIUS)
    base = np.array([0.85, 0.25, 0.2])
    tint = 0.15 * (pts[:, 2:3] / BALL_RADIUS)
    colors = np.clip(base[None, :] + tint, 0.0, 1.0)
    spacing = BALL_RADIUS * np.sqrt(4.0 * np.pi / n)
    return _cloud_from_surface(pts, colors, scale=0.9 * spacing)


def toy_box_splat(per_edge: int = 14) -> SplatCloud:
    """Splats on a box surface, one grid per face, cool blue with face shading."""
    sx, sy, sz = BOX_SIZE
    half = np.array([sx, sy, sz]) * 0.5
    points = []
    shades = []
    lin = np.linspace(-1.0, 1.0, per_edge)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u_axis, v_axis = [a for a in range(3) if a != axis]
            gu, gv = np.meshgrid(lin, lin)
            face = np.zeros((per_edge * per_edge, 3))
            face[:, axis] = sign * half[axis]
            face[:, u_axis] = gu.ravel() * half[u_axis]
            face[:, v_axis] = gv.ravel() * half[v_axis]
            points.append(face)
            shades.append(np.full(per_edge * per_edge, 0.8 + 0.2 * sign * (axis == 2)))
    pts = np.concatenate(points)
    shade = np.concatenate(shades)
    base = np.array([0.2, 0.4, 0.85])
    colors = np.clip(base[None, :] * shade[:, None], 0.0, 1.0)
    spacing = max(BOX_SIZE) / per_edge
    return _cloud_from_surface(pts, colors, scale=0.8 * spacing)


def toy_environment_splat(workspace_min, workspace_max, spacing: float = 0.02) -> SplatCloud:
    """Flat tabletop splat: a grid of squashed splats with a subtle checker."""
    lo = np.asarray(workspace_min, dtype=float)
    hi = np.asarray(workspace_max, dtype=float)
    margin = 0.25 * max(hi[0] - lo[0], hi[1] - lo[1])
    xs = np.arange(lo[0] - margin, hi[0] + margin + spacing, spacing)
    ys = np.arange(lo[1] - margin, hi[1] + margin + spacing, spacing)
    gx, gy = np.meshgrid(xs, ys)
    n = gx.size
    pts = np.stack([gx.ravel(), gy.ravel(), np.full(n, lo[2])], axis=-1)
    checker = ((np.floor(gx.ravel() / (4 * spacing)) + np.floor(gy.ravel() / (4 * spacing))) % 2) * 0.08
    base = np.array([0.55, 0.5, 0.45])
    colors = np.clip(base[None, :] + checker[:, None], 0.0, 1.0)
    cloud = _cloud_from_surface(pts, colors, scale=0.8 * spacing, opacity=1.0)
    scales = cloud.scales.copy()
    scales[:, 2] = 0.1 * spacing  # squash vertically into a tabletop sheet
    return SplatCloud(
        means=cloud.means,
        scales=scales,
        rotations=cloud.rotations,
        opacities=cloud.opacities,
        sh=cloud.sh,
    )


_TOY_CONFIG = """\
# Toy project: procedural assets exercising the full pipeline.
[project]
name = "toy"
seed = 20240521
frame_count = 20
image_width = 640
image_height = 480

[workspace]
min = [-0.35, -0.35, 0.0]
max = [0.35, 0.35, 0.5]

[environment]
splat = "env.ply"

[[assets]]
name = "ball"
class_id = 0
splat = "ball.ply"
mesh = "ball.obj"

[[assets]]
name = "block"
class_id = 1
splat = "block.ply"
mesh = "block.obj"

[scene]
count_min = 2
count_max = 4

[camera]
fx = 640.0
fy = 640.0
cx = 320.0
cy = 240.0
near = 0.01
far = 10.0
interpolation = "catmull-rom"

[[camera.keyframes]]
time = 0.0
position = [0.0, -0.72, 0.62]
look_at = [0.0, 0.0, 0.02]

[[camera.keyframes]]
time = 0.35
position = [0.55, -0.5, 0.55]
look_at = [0.0, 0.0, 0.02]

[[camera.keyframes]]
time = 0.7
position = [0.7, 0.3, 0.5]
look_at = [0.0, 0.0, 0.02]

[[camera.keyframes]]
time = 1.0
position = [0.2, 0.68, 0.6]
look_at = [0.0, 0.0, 0.02]

[light]
kind = "directional"
color = [1.0, 0.98, 0.92]
ambient = 0.35

[[light.keyframes]]
time = 0.0
direction = [-0.45, -0.3, -1.0]

[[light.keyframes]]
time = 1.0
direction = [0.4, -0.5, -1.0]

[compositing]
blur_sigma = 4.0
sigmoid_k = 10.0
sigmoid_c = 0.5
shadow_floor = 0.45
highlight_threshold = 0.8
highlight_strength = 0.12

[augment]
hue_shift_max = 8.0
exposure_stops_max = 0.35
noise_sigma_max = 0.015

[labels]
simplify_epsilon = 1.0
min_area_frac = 1e-4

[split]
train = 0.75
val = 0.25
"""


def make_toy_assets(out_dir: str | Path) -> dict[str, Path]:
    """Write the toy bundle into ``out_dir``; returns the emitted file map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ws_min = (-0.35, -0.35, 0.0)
    ws_max = (0.35, 0.35, 0.5)

    files = {}
    ball_cloud = toy_ball_splat()
    save_splat_ply(ball_cloud, out / "ball.ply")
    save_obj(uv_sphere_mesh(BALL_RADIUS, rings=12, segments=20), out / "ball.obj")
    box_cloud = toy_box_splat()
    save_splat_ply(box_cloud, out / "block.ply")
    save_obj(box_mesh(BOX_SIZE), out / "block.obj")
    save_splat_ply(toy_environment_splat(ws_min, ws_max), out / "env.ply")
    (out / "toy.toml").write_text(_TOY_CONFIG, encoding="utf-8")
    for name in ("ball.ply", "ball.obj", "block.ply", "block.obj", "env.ply", "toy.toml"):
        files[name] = out / name
    return files
