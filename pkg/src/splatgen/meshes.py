"""Triangle meshes: the proxy geometry for physics, shadows, and ID maps.

OBJ support covers the plain geometry subset (``v`` and ``f`` records,
1-based indices, polygons fan-triangulated); everything else in the file is
ignored. Procedural primitives used by toy assets and tests live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import SimilarityTransform, quat_rotate


class MeshFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int
    instance_id: int = 1
    class_id: int = 0

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle index out of range")
        if self.instance_id < 1:
            raise ValueError("instance_id must be a positive integer")
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def bounding_radius(self) -> float:
        """Max vertex distance from the vertex centroid."""
        return float(np.linalg.norm(self.vertices - self.centroid(), axis=1).max())

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "TriMesh":
        """Rigidly posed copy: v -> R v + t."""
        verts = quat_rotate(rotation, self.vertices) + np.asarray(translation, dtype=float)
        return replace(self, vertices=verts)

    def with_ids(self, instance_id: int, class_id: int | None = None) -> "TriMesh":
        return replace(
            self,
            instance_id=instance_id,
            class_id=self.class_id if class_id is None else class_id,
        )


def align_mesh_to_splat(mesh: TriMesh, t_recon: SimilarityTransform) -> TriMesh:
    """Map mesh vertices through the inverse of the reconstruction transform.

    Reconstruction tools center and scale their output; undoing that puts
    the mesh in the same frame as the splat so both assets are co-located.
    """
    return replace(mesh, vertices=t_recon.inverse().apply(mesh.vertices))


def load_obj(path: str | Path, instance_id: int = 1, class_id: int = 0) -> TriMesh:
    """Read an ASCII OBJ (v/f records only; faces fan-triangulated)."""
    path = Path(path)
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path.name}:{lineno}: vertex needs 3 coordinates")
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path.name}:{lineno}: face needs >= 3 vertices")
                idx = []
                for token in parts[1:]:
                    vi = token.split("/")[0]
                    i = int(vi)
                    # negative OBJ indices count from the end
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                for k in range(1, len(idx) - 1):
                    triangles.append([idx[0], idx[k], idx[k + 1]])
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if not np.all(np.isfinite(verts)):
        raise MeshFormatError(f"{path.name}: non-finite vertex coordinate")
    if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
        raise MeshFormatError(f"{path.name}: face index out of range")
    return TriMesh(vertices=verts, triangles=tris, instance_id=instance_id, class_id=class_id)


def save_obj(mesh: TriMesh, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def box_mesh(size: tuple[float, float, float], center: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> TriMesh:
    hx, hy, hz = (s * 0.5 for s in size)
    cx, cy, cz = center
    verts = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
        ]
    )
    tris = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ],
        dtype=np.int64,
    )
    return TriMesh(vertices=verts, triangles=tris)


def uv_sphere_mesh(radius: float, rings: int = 12, segments: int = 20) -> TriMesh:
    verts = [np.array([0.0, 0.0, radius])]
    for ri in range(1, rings):
        theta = np.pi * ri / rings
        z = radius * np.cos(theta)
        r = radius * np.sin(theta)
        for si in range(segments):
            phi = 2.0 * np.pi * si / segments
            verts.append(np.array([r * np.cos(phi), r * np.sin(phi), z]))
    verts.append(np.array([0.0, 0.0, -radius]))
    vertices = np.stack(verts)

    tris: list[list[int]] = []
    def ring_index(ri: int, si: int) -> int:
        return 1 + (ri - 1) * segments + (si % segments)

    for si in range(segments):
        tris.append([0, ring_index(1, si), ring_index(1, si + 1)])
    for ri in range(1, rings - 1):
        for si in range(segments):
            a, b = ring_index(ri, si), ring_index(ri, si + 1)
            c, d = ring_index(ri + 1, si), ring_index(ri + 1, si + 1)
            tris.append([a, c, d])
            tris.append([a, d, b])
    south = len(vertices) - 1
    for si in range(segments):
        tris.append([south, ring_index(rings - 1, si + 1), ring_index(rings - 1, si)])
    return TriMesh(vertices=vertices, triangles=np.asarray(tris, dtype=np.int64))


def quad_mesh(p0, p1, p2, p3) -> TriMesh:
    """Two triangles over four corners given in loop order."""
    verts = np.asarray([p0, p1, p2, p3], dtype=float)
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return TriMesh(vertices=verts, triangles=tris)
