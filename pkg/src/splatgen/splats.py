"""Gaussian-splat data model, splat PLY I/O, and cloud-level operations.

A cloud is stored struct-of-arrays: means (N,3), scales (N,3), rotations
(N,4) unit quaternions (w,x,y,z), opacities (N,) in [0,1], and sh (N,3,16)
spherical-harmonic color coefficients per channel. In-memory values are
activated (linear scale, [0,1] opacity); the PLY interchange format stores
log-scales and logit-opacities, converted on load/save.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cameras import PinholeCamera, Pose, project_points
from .geometry import SimilarityTransform, quat_multiply, quat_normalize
from .sh import NUM_COEFFS, rotate_sh


class SplatFormatError(ValueError):
    """Raised for malformed splat PLY structure (missing properties, bad header)."""


class SplatDataError(ValueError):
    """Raised for corrupt splat payloads (non-finite values)."""


@dataclass(frozen=True)
class Gaussian3D:
    """One splat primitive with activated parameters."""

    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    sh: np.ndarray  # (3, 16)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(3))
        scale = np.asarray(self.scale, dtype=float).reshape(3)
        if np.any(scale <= 0):
            raise ValueError("scale components must be positive")
        if not (0.0 <= self.opacity <= 1.0):
            raise ValueError("opacity must be in [0, 1]")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "sh", np.asarray(self.sh, dtype=float).reshape(3, NUM_COEFFS))


@dataclass(frozen=True)
class SplatCloud:
    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    scales: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rotations: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    opacities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sh: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, NUM_COEFFS)))

    def __post_init__(self) -> None:
        n = self.means.shape[0]
        shapes = {
            "means": (n, 3),
            "scales": (n, 3),
            "rotations": (n, 4),
            "opacities": (n,),
            "sh": (n, 3, NUM_COEFFS),
        }
        for name, want in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
            object.__setattr__(self, name, arr)

    @property
    def count(self) -> int:
        return self.means.shape[0]

    def __len__(self) -> int:
        return self.count

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            mean=self.means[i],
            scale=self.scales[i],
            rotation=self.rotations[i],
            opacity=float(self.opacities[i]),
            sh=self.sh[i],
        )

    @staticmethod
    def from_gaussians(gaussians: list[Gaussian3D]) -> "SplatCloud":
        if not gaussians:
            return SplatCloud()
        return SplatCloud(
            means=np.stack([g.mean for g in gaussians]),
            scales=np.stack([g.scale for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            opacities=np.array([g.opacity for g in gaussians], dtype=float),
            sh=np.stack([g.sh for g in gaussians]),
        )

    def select(self, mask: np.ndarray) -> "SplatCloud":
        return SplatCloud(
            means=self.means[mask],
            scales=self.scales[mask],
            rotations=self.rotations[mask],
            opacities=self.opacities[mask],
            sh=self.sh[mask],
        )

    def validate(self) -> None:
        """Check the cloud invariants; raises SplatDataError on violation."""
        for name in ("means", "scales", "rotations", "opacities", "sh"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                bad = int(np.argwhere(~np.isfinite(arr).reshape(self.count, -1).all(axis=1))[0, 0])
                raise SplatDataError(f"non-finite {name} at element {bad}")
        if np.any(self.scales <= 0):
            raise SplatDataError("non-positive scale component")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise SplatDataError("opacity outside [0, 1]")
        norms = np.linalg.norm(self.rotations, axis=1)
        if self.count and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise SplatDataError("rotation quaternion not unit-norm")


def concat_clouds(clouds: list[SplatCloud]) -> SplatCloud:
    if not clouds:
        return SplatCloud()
    return SplatCloud(
        means=np.concatenate([c.means for c in clouds]),
        scales=np.concatenate([c.scales for c in clouds]),
        rotations=np.concatenate([c.rotations for c in clouds]),
        opacities=np.concatenate([c.opacities for c in clouds]),
        sh=np.concatenate([c.sh for c in clouds]),
    )


# De facto 3DGS splat PLY vertex layout. f_rest is channel-major:
# f_rest_0..14 are the 15 higher-order coefficients of channel 0, etc.
_REQUIRED_PROPS = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)

_PLY_TYPES = {
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "short": "<i2", "ushort": "<u2", "int16": "<i2", "uint16": "<u2",
    "int": "<i4", "uint": "<u4", "int32": "<i4", "uint32": "<u4",
}

_OPACITY_CLAMP = 1e-7  # keeps logit finite while round-tripping within 1e-6


def _logistic(x: np.ndarray) -> np.ndarray:
    # numerically stable for large |x|
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, _OPACITY_CLAMP, 1.0 - _OPACITY_CLAMP)
    return np.log(p / (1.0 - p))


def _parse_ply_header(f) -> tuple[int, list[tuple[str, str]]]:
    line = f.readline().strip()
    if line != b"ply":
        raise SplatFormatError("not a PLY file")
    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    while True:
        raw = f.readline()
        if not raw:
            raise SplatFormatError("unterminated PLY header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment"):
            continue
        if line == "end_header":
            break
        parts = line.split()
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
            elif count is None:
                raise SplatFormatError(f"unsupported leading element {parts[1]!r}")
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise SplatFormatError("list properties are not supported on vertices")
            props.append((parts[2], parts[1]))
    if fmt != "binary_little_endian":
        raise SplatFormatError(f"expected binary_little_endian PLY, got {fmt!r}")
    if count is None:
        raise SplatFormatError("missing vertex element")
    return count, props


def load_splat_ply(path: str | Path) -> SplatCloud:
    """Load a 3DGS-convention binary PLY, applying per-element activations.

    Stored log-scales become linear (exp), stored logit-opacities become
    [0,1] (logistic), and quaternions are normalized. Missing required
    properties raise SplatFormatError naming the property; non-finite
    payload values raise SplatDataError with the element index.
    """
    path = Path(path)
    with open(path, "rb") as f:
        count, props = _parse_ply_header(f)
        names = [name for name, _ in props]
        for req in _REQUIRED_PROPS:
            if req not in names:
                raise SplatFormatError(f"{path.name}: missing vertex property {req!r}")
        try:
            dtype = np.dtype([(name, _PLY_TYPES[ptype]) for name, ptype in props])
        except KeyError as exc:
            raise SplatFormatError(f"{path.name}: unsupported property type {exc.args[0]!r}") from None
        data = np.frombuffer(f.read(dtype.itemsize * count), dtype=dtype)
    if data.size != count:
        raise SplatFormatError(f"{path.name}: truncated vertex data")
    if count == 0:
        return SplatCloud()

    def col(name: str) -> np.ndarray:
        return data[name].astype(float)

    raw = np.stack([col(p) for p in _REQUIRED_PROPS], axis=1)
    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise SplatDataError(f"{path.name}: non-finite value at element {idx}")

    means = np.stack([col("x"), col("y"), col("z")], axis=1)
    sh = np.empty((count, 3, NUM_COEFFS))
    for c in range(3):
        sh[:, c, 0] = col(f"f_dc_{c}")
        for j in range(15):
            sh[:, c, 1 + j] = col(f"f_rest_{c * 15 + j}")
    opacities = _logistic(col("opacity"))
    scales = np.exp(np.stack([col(f"scale_{i}") for i in range(3)], axis=1))
    rotations = np.stack([col(f"rot_{i}") for i in range(4)], axis=1)
    norms = np.linalg.norm(rotations, axis=1)
    if np.any(norms == 0):
        idx = int(np.argmin(norms))
        raise SplatDataError(f"{path.name}: zero-norm quaternion at element {idx}")
    rotations = rotations / norms[:, None]
    return SplatCloud(means=means, scales=scales, rotations=rotations, opacities=opacities, sh=sh)


def save_splat_ply(cloud: SplatCloud, path: str | Path) -> None:
    """Write a cloud as a 3DGS-convention binary PLY (inverse activations applied)."""
    path = Path(path)
    n = cloud.count
    header_props = "\n".join(f"property float {name}" for name in _REQUIRED_PROPS)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        f"{header_props}\n"
        "end_header\n"
    )
    cols = np.empty((n, len(_REQUIRED_PROPS)), dtype="<f4")
    if n:
        body = np.empty((n, len(_REQUIRED_PROPS)))
        body[:, 0:3] = cloud.means
        for c in range(3):
            body[:, 3 + c] = cloud.sh[:, c, 0]
            body[:, 6 + c * 15 : 6 + (c + 1) * 15] = cloud.sh[:, c, 1:]
        body[:, 51] = _logit(cloud.opacities)
        body[:, 52:55] = np.log(cloud.scales)
        body[:, 55:59] = cloud.rotations
        cols[:] = body
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(cols.tobytes())


def transform_cloud(
    cloud: SplatCloud, t: SimilarityTransform, sh_rotation: str = "full"
) -> SplatCloud:
    """Apply a similarity transform to every splat in the cloud.

    Means map through ``t``, scales pick up the uniform factor, and splat
    orientations are left-composed with the transform rotation. The DC color
    term is always preserved; higher-order coefficients are rotated with the
    transform (``sh_rotation="full"``) or zeroed (``"dc_only"``, a cheap
    approximate mode).
    """
    if sh_rotation not in ("full", "dc_only"):
        raise ValueError(f"unknown sh_rotation mode {sh_rotation!r}")
    if cloud.count == 0:
        return cloud
    identity_rot = bool(np.allclose(t.rotation, [1.0, 0.0, 0.0, 0.0], atol=0.0))
    if t.scale == 1.0 and identity_rot and not t.translation.any():
        return cloud
    means = t.apply(cloud.means)
    scales = cloud.scales * t.scale
    rotations = quat_normalize(quat_multiply(t.rotation[None, :], cloud.rotations))
    if identity_rot:
        sh = cloud.sh
    elif sh_rotation == "full":
        sh = rotate_sh(cloud.sh, t.rotation)
        sh[:, :, 0] = cloud.sh[:, :, 0]
    else:
        sh = np.zeros_like(cloud.sh)
        sh[:, :, 0] = cloud.sh[:, :, 0]
    return SplatCloud(means=means, scales=scales, rotations=rotations, opacities=cloud.opacities, sh=sh)


@dataclass(frozen=True)
class MaskedView:
    """A camera view with a binary object mask (True = object pixel)."""

    camera: PinholeCamera
    pose: Pose
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.camera.height, self.camera.width):
            raise ValueError(
                f"mask shape {mask.shape} does not match camera {self.camera.height}x{self.camera.width}"
            )
        object.__setattr__(self, "mask", mask)


def strip_background(cloud: SplatCloud, views: list[MaskedView], keep_frac: float = 0.8) -> SplatCloud:
    """Keep splats whose centers land on mask pixels in enough views.

    A view counts for a splat only when its mean projects in front of that
    camera and inside the image; a splat is kept when the fraction of
    countable views that see it on a mask-1 pixel is at least ``keep_frac``.
    Splats countable in zero views are dropped.
    """
    if not views:
        raise ValueError("strip_background requires at least one view")
    if not (0.0 <= keep_frac <= 1.0):
        raise ValueError("keep_frac must be in [0, 1]")
    if cloud.count == 0:
        return cloud
    countable = np.zeros(cloud.count, dtype=int)
    hits = np.zeros(cloud.count, dtype=int)
    for view in views:
        uv, _, in_front = project_points(view.camera, view.pose, cloud.means)
        cols = np.floor(uv[:, 0]).astype(int)
        rows = np.floor(uv[:, 1]).astype(int)
        inside = (
            in_front
            & (uv[:, 0] >= 0.0)
            & (uv[:, 0] < view.camera.width)
            & (uv[:, 1] >= 0.0)
            & (uv[:, 1] < view.camera.height)
        )
        countable += inside
        idx = np.nonzero(inside)[0]
        hits[idx] += view.mask[rows[idx], cols[idx]]
    # epsilon guards exact-boundary fractions (e.g. 4/5 views at keep_frac 0.8)
    keep = (countable > 0) & (hits >= keep_frac * countable - 1e-9)
    return cloud.select(keep)


def align_mesh_vertices(vertices: np.ndarray, t_recon: SimilarityTransform) -> np.ndarray:
    """Undo a reconstruction tool's normalization transform on mesh vertices.

    ``t_recon`` is the centering/scaling transform the tool applied; mapping
    vertices through its inverse puts the mesh back in the splat's frame.
    """
    return t_recon.inverse().apply(np.asarray(vertices, dtype=float))
