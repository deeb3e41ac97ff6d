"""Software triangle rasterization: depth buffers, instance-ID maps, and the
grayscale shadow/illumination pass.

The rasterizer is a z-buffer with perspective-correct depth via screen-space
interpolation of 1/z, the top-left fill rule for watertight shared edges,
and Sutherland-Hodgman clipping against the near plane. Shadows come from a
second rasterization in light space (orthographic for directional lights,
one 90-degree perspective frustum for point lights) compared against a
constant bias in normalized light depth.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cameras import LightRig, PinholeCamera, Pose
from .geometry import matrix_to_quat
from .meshes import TriMesh

SHADOW_MAP_RESOLUTION = 2048
SHADOW_DEPTH_BIAS = 2e-3


class SceneConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class _Raster:
    depth: np.ndarray  # (H, W) float, +inf empty
    owner: np.ndarray  # (H, W) int32 triangle row index, -1 empty


def _gather_triangles(meshes: list[TriMesh]) -> tuple[np.ndarray, np.ndarray]:
    """Flatten meshes into (M,3,3) world triangles + per-triangle instance id."""
    tris = []
    instance = []
    for mesh in meshes:
        if mesh.num_triangles == 0:
            continue
        tris.append(mesh.vertices[mesh.triangles])
        instance.append(np.full(mesh.num_triangles, mesh.instance_id, dtype=np.int32))
    if not tris:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int32)
    return np.concatenate(tris), np.concatenate(instance)


def _clip_near(tri_cam: np.ndarray, near: float) -> list[np.ndarray]:
    """Clip one camera-space triangle against z >= near; returns 0..2 triangles."""
    z = tri_cam[:, 2]
    inside = z >= near
    n_in = int(inside.sum())
    if n_in == 3:
        return [tri_cam]
    if n_in == 0:
        return []
    poly = []
    for i in range(3):
        a, b = tri_cam[i], tri_cam[(i + 1) % 3]
        a_in, b_in = inside[i], inside[(i + 1) % 3]
        if a_in:
            poly.append(a)
        if a_in != b_in:
            t = (near - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    return [np.stack([poly[0], poly[k], poly[k + 1]]) for k in range(1, len(poly) - 1)]


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _raster_rows(
    tri_screen: list[tuple[np.ndarray, np.ndarray, int]],
    width: int,
    row0: int,
    row1: int,
    perspective: bool,
) -> _Raster:
    """Rasterize prepared screen triangles into rows [row0, row1).

    ``perspective`` interpolates 1/z linearly in screen space (correct for
    projected triangles); otherwise z itself is interpolated (orthographic).
    """
    h = row1 - row0
    depth = np.full((h, width), np.inf)
    owner = np.full((h, width), -1, dtype=np.int32)
    for uv, z, tri_id in tri_screen:
        x0 = max(int(np.floor(uv[:, 0].min() - 0.5)), 0)
        x1 = min(int(np.ceil(uv[:, 0].max() + 0.5)), width)
        y0 = max(int(np.floor(uv[:, 1].min() - 0.5)), row0)
        y1 = min(int(np.ceil(uv[:, 1].max() + 0.5)), row1)
        if x0 >= x1 or y0 >= y1:
            continue
        # canonical orientation: every edge function >= 0 inside
        area = _edge(uv[0, 0], uv[0, 1], uv[1, 0], uv[1, 1], uv[2, 0], uv[2, 1])
        if area == 0.0:
            continue
        if area < 0.0:
            uv = uv[[0, 2, 1]]
            z = z[[0, 2, 1]]
            area = -area
        px = np.arange(x0, x1, dtype=float) + 0.5
        py = np.arange(y0, y1, dtype=float) + 0.5
        gx, gy = np.meshgrid(px, py)
        cover = np.ones(gx.shape, dtype=bool)
        w = []
        for i in range(3):
            a = uv[(i + 1) % 3]
            b = uv[(i + 2) % 3]
            e = _edge(a[0], a[1], b[0], b[1], gx, gy)
            d = b - a
            # top-left rule: zero-area boundary pixels belong to top edges
            # (horizontal, interior below) and left edges (pointing up)
            top_left = (d[1] == 0.0 and d[0] > 0.0) or d[1] < 0.0
            cover &= (e > 0.0) | ((e == 0.0) & top_left)
            w.append(e)
        if not cover.any():
            continue
        if perspective:
            inv_z = (w[0] / z[0] + w[1] / z[1] + w[2] / z[2]) / area
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                zpix = 1.0 / inv_z
        else:
            zpix = (w[0] * z[0] + w[1] * z[1] + w[2] * z[2]) / area
        band = depth[y0 - row0 : y1 - row0, x0:x1]
        obuf = owner[y0 - row0 : y1 - row0, x0:x1]
        write = cover & (zpix < band)
        band[write] = zpix[write]
        obuf[write] = tri_id
    return _Raster(depth=depth, owner=owner)


def _raster_bands(
    tri_screen: list[tuple[np.ndarray, np.ndarray, int]],
    width: int,
    height: int,
    workers: int = 1,
    perspective: bool = True,
) -> _Raster:
    if workers <= 1:
        return _raster_rows(tri_screen, width, 0, height, perspective)
    bands = np.linspace(0, height, workers + 1, dtype=int)
    ranges = [(int(bands[i]), int(bands[i + 1])) for i in range(workers) if bands[i] < bands[i + 1]]
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        results = list(
            pool.map(lambda rr: _raster_rows(tri_screen, width, rr[0], rr[1], perspective), ranges)
        )
    return _Raster(
        depth=np.concatenate([r.depth for r in results]),
        owner=np.concatenate([r.owner for r in results]),
    )


def _prepare_screen_triangles(
    tris_world: np.ndarray,
    cam: PinholeCamera,
    pose: Pose,
) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Transform, near-clip, and project triangles; keeps originating indices."""
    if tris_world.shape[0] == 0:
        return []
    r = pose.matrix()
    cam_tris = tris_world @ r.T + pose.translation
    out = []
    for ti in range(cam_tris.shape[0]):
        for clipped in _clip_near(cam_tris[ti], cam.near):
            z = clipped[:, 2]
            uv = np.stack(
                [cam.fx * clipped[:, 0] / z + cam.cx, cam.fy * clipped[:, 1] / z + cam.cy],
                axis=1,
            )
            out.append((uv, z, ti))
    return out


def rasterize_depth(meshes: list[TriMesh], cam: PinholeCamera, pose: Pose, workers: int = 1) -> np.ndarray:
    """Per-pixel nearest-surface depth over all meshes; +inf where empty."""
    tris, _ = _gather_triangles(meshes)
    screen = _prepare_screen_triangles(tris, cam, pose)
    return _raster_bands(screen, cam.width, cam.height, workers=workers).depth


def render_id_map(object_meshes: list[TriMesh], cam: PinholeCamera, pose: Pose, workers: int = 1) -> np.ndarray:
    """Per-pixel instance id of the nearest surface; 0 where no mesh.

    Occlusion is resolved by the z-buffer, which generalizes ordered
    rendering of uniquely colored instances.
    """
    ids = [m.instance_id for m in object_meshes]
    if len(set(ids)) != len(ids):
        raise SceneConfigurationError("instance ids must be unique within a scene")
    tris, instance = _gather_triangles(object_meshes)
    screen = _prepare_screen_triangles(tris, cam, pose)
    raster = _raster_bands(screen, cam.width, cam.height, workers=workers)
    out = np.zeros((cam.height, cam.width), dtype=np.int32)
    hit = raster.owner >= 0
    out[hit] = instance[raster.owner[hit]]
    return out


def _triangle_normals(tris: np.ndarray) -> np.ndarray:
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    length[length == 0.0] = 1.0
    return n / length


def _light_frame(light: LightRig, points: np.ndarray) -> np.ndarray:
    """Orthonormal light basis (rows: right, down, forward)."""
    if light.kind == "directional":
        forward = light.direction
    else:
        centroid = points.mean(axis=0)
        forward = centroid - light.position
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise SceneConfigurationError("point light coincides with the scene centroid")
        forward = forward / norm
    up = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(forward, up)) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    x_axis = np.cross(forward, up)
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(forward, x_axis)
    return np.stack([x_axis, y_axis, forward])


def render_shadow_pass(
    meshes: list[TriMesh],
    cam: PinholeCamera,
    pose: Pose,
    light: LightRig,
    shadow_resolution: int = SHADOW_MAP_RESOLUTION,
    depth_bias: float = SHADOW_DEPTH_BIAS,
    workers: int = 1,
) -> np.ndarray:
    """Grayscale camera-space illumination in [0, 1]; background pixels are 1.

    Surface pixels get ``ambient + (1 - ambient) * max(0, n.l) * visibility``
    with flat triangle normals (flipped toward the camera) and hard
    shadow-map visibility.
    """
    tris, _ = _gather_triangles(meshes)
    illum = np.ones((cam.height, cam.width))
    if tris.shape[0] == 0:
        return illum

    all_verts = tris.reshape(-1, 3)
    basis = _light_frame(light, all_verts)

    if light.kind == "directional":
        light_pts = all_verts @ basis.T
        mins = light_pts.min(axis=0)
        maxs = light_pts.max(axis=0)
        # zero footprint means no frustum can be fitted; a zero depth range
        # (flat scene facing the light) only needs padding
        if np.any(maxs[:2] - mins[:2] <= 1e-12):
            raise SceneConfigurationError("scene bounds are degenerate in light space")
        pad = 1e-3 * float(np.max(maxs[:2] - mins[:2]))
        x_range = (mins[0] - pad, maxs[0] + pad)
        y_range = (mins[1] - pad, maxs[1] + pad)
        z0, z1 = mins[2] - pad, maxs[2] + pad
        sx = shadow_resolution / (x_range[1] - x_range[0])
        sy = shadow_resolution / (y_range[1] - y_range[0])
        tris_light = light_pts.reshape(-1, 3, 3)
        screen = [
            (
                np.stack(
                    [(tri[:, 0] - x_range[0]) * sx, (tri[:, 1] - y_range[0]) * sy], axis=1
                ),
                tri[:, 2],
                ti,
            )
            for ti, tri in enumerate(tris_light)
        ]
        shadow = _raster_bands(screen, shadow_resolution, shadow_resolution, perspective=False).depth
        shadow_norm = (shadow - z0) / (z1 - z0)

        def light_uv_depth(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            lp = points @ basis.T
            su = (lp[:, 0] - x_range[0]) * sx
            sv = (lp[:, 1] - y_range[0]) * sy
            dn = (lp[:, 2] - z0) / (z1 - z0)
            return su, sv, dn

    else:
        rel = all_verts - light.position
        depths = rel @ basis[2]
        if float(depths.max()) <= 0.0:
            raise SceneConfigurationError("point light sees no geometry in front of it")
        z1 = float(depths.max()) * 1.05
        z0 = max(1e-4, float(depths.min()) * 0.5)
        half = shadow_resolution / 2.0
        light_cam = PinholeCamera(
            fx=half, fy=half, cx=half, cy=half,
            width=shadow_resolution, height=shadow_resolution,
            near=z0, far=z1 * 2.0,
        )
        light_pose = Pose(rotation=matrix_to_quat(basis), translation=-basis @ light.position)
        screen = _prepare_screen_triangles(tris, light_cam, light_pose)
        shadow = _raster_bands(screen, shadow_resolution, shadow_resolution).depth
        shadow_norm = (shadow - z0) / (z1 - z0)

        def light_uv_depth(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            lp = (points - light.position) @ basis.T
            z = np.maximum(lp[:, 2], 1e-9)
            su = half * lp[:, 0] / z + half
            sv = half * lp[:, 1] / z + half
            dn = (lp[:, 2] - z0) / (z1 - z0)
            return su, sv, dn

    # camera pass: nearest surface, then shade
    screen_cam = _prepare_screen_triangles(tris, cam, pose)
    raster = _raster_bands(screen_cam, cam.width, cam.height, workers=workers)
    hit = raster.owner >= 0
    if not hit.any():
        return illum

    ys, xs = np.nonzero(hit)
    zs = raster.depth[hit]
    u = xs + 0.5
    v = ys + 0.5
    pc = np.stack([(u - cam.cx) / cam.fx * zs, (v - cam.cy) / cam.fy * zs, zs], axis=1)
    r = pose.matrix()
    world = (pc - pose.translation) @ r

    normals = _triangle_normals(tris)[raster.owner[hit]]
    to_cam = pose.camera_center()[None, :] - world
    flip = np.sum(normals * to_cam, axis=1) < 0.0
    normals[flip] = -normals[flip]

    if light.kind == "directional":
        l_dir = np.broadcast_to(-light.direction, world.shape)
    else:
        l_dir = light.position[None, :] - world
        l_norm = np.linalg.norm(l_dir, axis=1, keepdims=True)
        l_norm[l_norm == 0.0] = 1.0
        l_dir = l_dir / l_norm
    ndotl = np.maximum(0.0, np.sum(normals * l_dir, axis=1))

    su, sv, dnorm = light_uv_depth(world)
    iu = np.floor(su).astype(int)
    iv = np.floor(sv).astype(int)
    inside = (iu >= 0) & (iu < shadow_resolution) & (iv >= 0) & (iv < shadow_resolution)
    visible = np.ones(world.shape[0])
    si = np.nonzero(inside)[0]
    stored = shadow_norm[iv[si], iu[si]]
    visible[si] = (dnorm[si] - depth_bias <= stored).astype(float)

    illum[ys, xs] = light.ambient + (1.0 - light.ambient) * ndotl * visible
    return np.clip(illum, 0.0, 1.0)
