"""CPU tile-based splat rasterizer for the photorealistic appearance pass.

Projection follows the standard splatting recipe: the 3D covariance
``R diag(s^2) R^T`` is pushed through the world-to-camera rotation and the
perspective Jacobian at the splat center, then dilated by a low-pass term.
Compositing is front-to-back alpha blending over a global depth sort.

Per-pixel semantics (shared by the tiled and the whole-frame paths):

    alpha_i = min(alpha_max, opacity_i * exp(-q/2)),  q = d^T cov2d^-1 d
    alpha_i = 0 where q > 9 (outside the 3-sigma ellipse)
    C += color_i * alpha_i * T;  T *= 1 - alpha_i     (while T >= t_cutoff)

The 3-sigma support cutoff makes tile binning exact: a splat binned away
from a tile contributes exactly zero there, so tiled and naive scheduling
produce bitwise-identical images.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cameras import PinholeCamera, Pose
from .geometry import quat_to_matrix
from .sh import eval_sh
from .splats import SplatCloud

LOWPASS_DILATION = 0.3  # px^2 added to the 2D covariance diagonal
ALPHA_MAX = 0.99
TRANSMITTANCE_CUTOFF = 1e-4
SUPPORT_RADIUS_SIGMA = 3.0
TILE_SIZE = 16


@dataclass(frozen=True)
class Splat2D:
    """A projected splat: screen mean, 2D covariance, depth, color, opacity."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float


def covariance_3d(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """World-frame covariance R diag(scale^2) R^T for one splat."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("scale components must be positive")
    r = quat_to_matrix(rotation)
    m = r * scale[None, :]
    return m @ m.T


@dataclass(frozen=True)
class ProjectedSplats:
    """Vectorized projection output for the surviving (non-culled) splats."""

    mean2d: np.ndarray     # (N, 2) pixels
    inv_cov: np.ndarray    # (N, 3) packed inverse 2D covariance (a, b, c)
    cov2d: np.ndarray      # (N, 2, 2)
    depth: np.ndarray      # (N,)
    color: np.ndarray      # (N, 3)
    opacity: np.ndarray    # (N,)
    radius: np.ndarray     # (N, 2) 3-sigma AABB half extents (rx, ry)
    order_key: np.ndarray  # (N,) original input index, for stable depth ties

    @property
    def count(self) -> int:
        return self.depth.shape[0]


def project_cloud(
    cloud: SplatCloud,
    cam: PinholeCamera,
    pose: Pose,
    index_offset: int = 0,
    dilation: float = LOWPASS_DILATION,
) -> ProjectedSplats:
    """Project every splat of a cloud; culls behind-camera and off-screen splats."""
    n = cloud.count
    if n == 0:
        return _empty_projection()
    w = pose.matrix()
    means_cam = cloud.means @ w.T + pose.translation
    z = means_cam[:, 2]
    in_front = z > cam.near

    zs = np.where(in_front, z, 1.0)
    x, y = means_cam[:, 0], means_cam[:, 1]
    u = cam.fx * x / zs + cam.cx
    v = cam.fy * y / zs + cam.cy

    # camera-frame covariance: W Sigma W^T with Sigma = R diag(s^2) R^T
    rot = quat_to_matrix(cloud.rotations)            # (N, 3, 3)
    m = rot * cloud.scales[:, None, :]               # R @ diag(s)
    cov3d = m @ np.swapaxes(m, 1, 2)
    cov_cam = np.einsum("ij,njk,lk->nil", w, cov3d, w)

    # perspective Jacobian at the splat center
    inv_z = 1.0 / zs
    inv_z2 = inv_z * inv_z
    j = np.zeros((n, 2, 3))
    j[:, 0, 0] = cam.fx * inv_z
    j[:, 0, 2] = -cam.fx * x * inv_z2
    j[:, 1, 1] = cam.fy * inv_z
    j[:, 1, 2] = -cam.fy * y * inv_z2
    cov2d = np.einsum("nij,njk,nlk->nil", j, cov_cam, j)
    cov2d[:, 0, 0] += dilation
    cov2d[:, 1, 1] += dilation

    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    usable = in_front & (det > 0) & np.isfinite(det)

    rx = SUPPORT_RADIUS_SIGMA * np.sqrt(np.maximum(a, 0.0))
    ry = SUPPORT_RADIUS_SIGMA * np.sqrt(np.maximum(c, 0.0))
    on_screen = (u + rx >= 0.0) & (u - rx < cam.width) & (v + ry >= 0.0) & (v - ry < cam.height)
    keep = usable & on_screen
    if not np.any(keep):
        return _empty_projection()

    idx = np.nonzero(keep)[0]
    inv_det = 1.0 / det[idx]
    inv_cov = np.stack([c[idx] * inv_det, -b[idx] * inv_det, a[idx] * inv_det], axis=1)

    cam_center = pose.camera_center()
    dirs = cloud.means[idx] - cam_center
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    colors = eval_sh(cloud.sh[idx], dirs / norms)

    return ProjectedSplats(
        mean2d=np.stack([u[idx], v[idx]], axis=1),
        inv_cov=inv_cov,
        cov2d=cov2d[idx],
        depth=z[idx],
        color=colors,
        opacity=cloud.opacities[idx].copy(),
        radius=np.stack([rx[idx], ry[idx]], axis=1),
        order_key=idx + index_offset,
    )


def _empty_projection() -> ProjectedSplats:
    return ProjectedSplats(
        mean2d=np.zeros((0, 2)),
        inv_cov=np.zeros((0, 3)),
        cov2d=np.zeros((0, 2, 2)),
        depth=np.zeros(0),
        color=np.zeros((0, 3)),
        opacity=np.zeros(0),
        radius=np.zeros((0, 2)),
        order_key=np.zeros(0, dtype=int),
    )


def project_gaussian(cam: PinholeCamera, pose: Pose, g) -> Splat2D | None:
    """Project one splat; returns None when culled (behind camera or off screen)."""
    cloud = SplatCloud(
        means=g.mean[None, :],
        scales=g.scale[None, :],
        rotations=g.rotation[None, :],
        opacities=np.array([g.opacity]),
        sh=g.sh[None, :, :],
    )
    proj = project_cloud(cloud, cam, pose)
    if proj.count == 0:
        return None
    return Splat2D(
        mean2d=proj.mean2d[0],
        cov2d=proj.cov2d[0],
        depth=float(proj.depth[0]),
        color=proj.color[0],
        opacity=float(proj.opacity[0]),
    )


def _concat_projections(parts: list[ProjectedSplats]) -> ProjectedSplats:
    parts = [p for p in parts if p.count]
    if not parts:
        return _empty_projection()
    if len(parts) == 1:
        return parts[0]
    return ProjectedSplats(
        mean2d=np.concatenate([p.mean2d for p in parts]),
        inv_cov=np.concatenate([p.inv_cov for p in parts]),
        cov2d=np.concatenate([p.cov2d for p in parts]),
        depth=np.concatenate([p.depth for p in parts]),
        color=np.concatenate([p.color for p in parts]),
        opacity=np.concatenate([p.opacity for p in parts]),
        radius=np.concatenate([p.radius for p in parts]),
        order_key=np.concatenate([p.order_key for p in parts]),
    )


def _composite_block(
    proj: ProjectedSplats,
    select: np.ndarray,
    px: np.ndarray,
    py: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Front-to-back compositing of the selected splats over a pixel block.

    ``select`` must already be in composite order. Returns premultiplied
    color (P, 3) and remaining transmittance (P,). The loop body performs
    the same scalar operations per pixel as a naive per-pixel loop; entries
    with zero alpha are exact no-ops, which keeps any binning of splats
    bitwise-equivalent as long as binning only drops zero-alpha splats.
    """
    p = px.shape[0]
    color = np.zeros((p, 3))
    trans = np.ones(p)
    mean2d = proj.mean2d
    inv_cov = proj.inv_cov
    colors = proj.color
    opacity = proj.opacity
    support_q = SUPPORT_RADIUS_SIGMA * SUPPORT_RADIUS_SIGMA
    for i in select:
        dx = px - mean2d[i, 0]
        dy = py - mean2d[i, 1]
        q = inv_cov[i, 0] * dx * dx + 2.0 * inv_cov[i, 1] * dx * dy + inv_cov[i, 2] * dy * dy
        inside = q <= support_q
        if not inside.any():
            continue
        alpha = np.where(inside, np.minimum(ALPHA_MAX, opacity[i] * np.exp(-0.5 * np.where(inside, q, 0.0))), 0.0)
        active = trans >= TRANSMITTANCE_CUTOFF
        if not active.any():
            break
        weight = np.where(active, alpha * trans, 0.0)
        color += weight[:, None] * colors[i]
        trans = np.where(active, trans * (1.0 - alpha), trans)
    return color, trans


def _pixel_centers(x0: int, x1: int, y0: int, y1: int) -> tuple[np.ndarray, np.ndarray]:
    xs = np.arange(x0, x1, dtype=float) + 0.5
    ys = np.arange(y0, y1, dtype=float) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    return gx.ravel(), gy.ravel()


def render_projected(
    proj: ProjectedSplats,
    width: int,
    height: int,
    background: np.ndarray,
    tile_size: int | None = TILE_SIZE,
    workers: int = 1,
    return_alpha: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Composite projected splats into an (H, W, 3) image in [0, 1].

    ``tile_size=None`` runs the whole frame as one block (the naive
    schedule); any tile size produces bitwise-identical output, as does any
    worker count (tiles are disjoint).
    """
    background = np.asarray(background, dtype=float).reshape(3)
    order = np.lexsort((proj.order_key, proj.depth))

    def run_block(x0: int, x1: int, y0: int, y1: int, select: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        px, py = _pixel_centers(x0, x1, y0, y1)
        color, trans = _composite_block(proj, select, px, py)
        shape = (y1 - y0, x1 - x0)
        return color.reshape(shape + (3,)), trans.reshape(shape)

    image = np.empty((height, width, 3))
    alpha_out = np.empty((height, width))

    if tile_size is None:
        color, trans = run_block(0, width, 0, height, order)
        image[:] = color
        alpha_out[:] = trans
    else:
        # bin by the 3-sigma AABB, inflated one pixel so that any splat with
        # conceivable nonzero support in a tile is included
        margin = 1.0
        x_min = proj.mean2d[:, 0] - proj.radius[:, 0] - margin
        x_max = proj.mean2d[:, 0] + proj.radius[:, 0] + margin
        y_min = proj.mean2d[:, 1] - proj.radius[:, 1] - margin
        y_max = proj.mean2d[:, 1] + proj.radius[:, 1] + margin

        tiles = []
        for y0 in range(0, height, tile_size):
            for x0 in range(0, width, tile_size):
                tiles.append((x0, min(x0 + tile_size, width), y0, min(y0 + tile_size, height)))

        def run_tile(tile: tuple[int, int, int, int]) -> tuple[tuple[int, int, int, int], np.ndarray, np.ndarray]:
            x0, x1, y0, y1 = tile
            hit = (x_max >= x0) & (x_min < x1) & (y_max >= y0) & (y_min < y1)
            select = order[hit[order]]
            color, trans = run_block(x0, x1, y0, y1, select)
            return tile, color, trans

        if workers <= 1:
            results = map(run_tile, tiles)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_tile, tiles))
        for (x0, x1, y0, y1), color, trans in results:
            image[y0:y1, x0:x1] = color
            alpha_out[y0:y1, x0:x1] = trans

    image += alpha_out[:, :, None] * background[None, None, :]
    np.clip(image, 0.0, 1.0, out=image)
    if return_alpha:
        return image, 1.0 - alpha_out
    return image


def render_appearance(
    clouds: list[SplatCloud],
    cam: PinholeCamera,
    pose: Pose,
    background: np.ndarray = (0.0, 0.0, 0.0),
    tile_size: int | None = TILE_SIZE,
    workers: int = 1,
    return_alpha: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Render splat clouds into an RGB image (and optionally an alpha mask).

    Splats from all clouds are projected, globally sorted front to back by
    center depth (ties broken by input order), and alpha-composited; the
    leftover transmittance is filled with ``background``.
    """
    parts = []
    offset = 0
    for cloud in clouds:
        parts.append(project_cloud(cloud, cam, pose, index_offset=offset))
        offset += cloud.count
    proj = _concat_projections(parts)
    return render_projected(
        proj, cam.width, cam.height, background,
        tile_size=tile_size, workers=workers, return_alpha=return_alpha,
    )
