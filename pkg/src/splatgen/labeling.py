"""Instance-ID maps to YOLO segmentation labels.

Per instance: 8-connected components are extracted, each component's outer
border is traced on the pixel-corner lattice (so rasterizing the polygon
back reproduces the mask exactly), polygons are simplified with a
closed-loop Ramer-Douglas-Peucker pass, small fragments are dropped, and
the survivors are serialized as normalized polygon lines.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

DEFAULT_SIMPLIFY_EPSILON = 1.5
DEFAULT_MIN_AREA_FRAC = 1e-4

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

# crack-walk directions on the corner lattice: +x, +y, -x, -y
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class InstanceLabel:
    """Polygons (pixel corners, (K,2) float arrays) for one visible instance."""

    class_id: int
    polygons: tuple[np.ndarray, ...]
    polygon_areas: tuple[int, ...]  # pixel counts of the source components

    def __post_init__(self) -> None:
        polys = tuple(np.asarray(p, dtype=float).reshape(-1, 2) for p in self.polygons)
        for p in polys:
            if p.shape[0] < 3:
                raise ValueError("polygons need at least 3 vertices")
        object.__setattr__(self, "polygons", polys)
        object.__setattr__(self, "polygon_areas", tuple(int(a) for a in self.polygon_areas))

    @property
    def pixel_area(self) -> int:
        return sum(self.polygon_areas)


@dataclass(frozen=True)
class YoloLine:
    class_index: int
    coords: tuple[float, ...]  # flat normalized x,y pairs

    def __post_init__(self) -> None:
        if len(self.coords) % 2 != 0 or len(self.coords) < 6:
            raise ValueError("need an even coordinate count >= 6")

    def serialize(self) -> str:
        coords = " ".join(f"{c:.6f}" for c in self.coords)
        return f"{self.class_index} {coords}"


def extract_components(ids: np.ndarray, instance_id: int) -> list[np.ndarray]:
    """8-connected boolean component masks for one instance id (may be empty)."""
    if instance_id <= 0:
        raise ValueError("instance_id must be positive")
    ids = np.asarray(ids)
    mask = ids == instance_id
    if not mask.any():
        return []
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    return [labels == k for k in range(1, n + 1)]


def trace_contour(region: np.ndarray) -> np.ndarray:
    """Outer border of a non-empty 8-connected region, on pixel corners.

    The walk keeps the region on its visual right (y down), which makes the
    vertex order counterclockwise in image coordinates; it starts at the
    top-left corner of the topmost-then-leftmost region pixel and emits one
    vertex per lattice corner visited. Diagonal pinch corners are resolved
    toward 8-connectivity, so the single loop encloses every region pixel.
    """
    region = np.asarray(region, dtype=bool)
    rows, cols = np.nonzero(region)
    if rows.size == 0:
        raise ValueError("region is empty")
    r0 = rows.min()
    c0 = cols[rows == r0].min()

    h, w = region.shape

    def inside(r: int, c: int) -> bool:
        return 0 <= r < h and 0 <= c < w and region[r, c]

    start = (int(c0), int(r0))
    start_dir = 0  # +x along the top edge of the start pixel
    verts = [start]
    x, y = start
    d = start_dir
    while True:
        dx, dy = _DIRS[d]
        x += dx
        y += dy
        # pixels ahead of the new corner, to the left and right of travel:
        # direction d, left = rotate -90deg (counterclockwise on screen)
        left = (d + 3) % 4
        ldx, ldy = _DIRS[left]
        rdx, rdy = _DIRS[(d + 1) % 4]
        # pixel beyond the corner on each side (corner (x,y) touches pixels
        # (y-1,x-1), (y-1,x), (y,x-1), (y,x)); offset picks the quadrant
        ahead_left = inside(y + min(dy, 0) + min(ldy, 0), x + min(dx, 0) + min(ldx, 0))
        ahead_right = inside(y + min(dy, 0) + min(rdy, 0), x + min(dx, 0) + min(rdx, 0))
        if ahead_left:
            d = left
        elif ahead_right:
            pass  # straight on
        else:
            d = (d + 1) % 4
        if (x, y) == start and d == start_dir:
            break
        verts.append((x, y))
        if len(verts) > 4 * (h + 2) * (w + 2):
            raise RuntimeError("contour walk failed to terminate")
    return np.asarray(verts, dtype=float)


def polygon_signed_area(poly: np.ndarray) -> float:
    """Shoelace area; positive for counterclockwise order in image coords."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _rdp_chain(points: np.ndarray, epsilon: float) -> np.ndarray:
    """Iterative RDP on an open chain; endpoints always kept."""
    n = points.shape[0]
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        seg = points[i + 1 : j]
        dist = _point_segment_distance(seg, points[i], points[j])
        k = int(np.argmax(dist))
        if dist[k] > epsilon:
            mid = i + 1 + k
            keep[mid] = True
            stack.append((i, mid))
            stack.append((mid, j))
    return points[keep]


def _farthest_pair(points: np.ndarray) -> tuple[int, int]:
    n = points.shape[0]
    best = (0, 1 if n > 1 else 0)
    best_d = -1.0
    # chunked exact search keeps memory bounded for long contours
    chunk = 512
    for i0 in range(0, n, chunk):
        block = points[i0 : i0 + chunk]
        d2 = np.sum((block[:, None, :] - points[None, :, :]) ** 2, axis=2)
        flat = int(np.argmax(d2))
        bi, bj = divmod(flat, n)
        if d2[bi, bj] > best_d:
            best_d = d2[bi, bj]
            best = (i0 + bi, bj)
    i, j = best
    return (i, j) if i < j else (j, i)


def simplify_polygon(poly: np.ndarray, epsilon: float) -> np.ndarray:
    """Closed-loop RDP: split the ring at its two farthest vertices, simplify
    each chain, and rejoin. Epsilon 0 returns the input unchanged; the output
    always keeps at least 3 vertices and deviates at most epsilon."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    poly = np.asarray(poly, dtype=float).reshape(-1, 2)
    if epsilon == 0.0 or poly.shape[0] <= 3:
        return poly.copy()
    i, j = _farthest_pair(poly)
    chain_a = poly[i : j + 1]
    chain_b = np.concatenate([poly[j:], poly[: i + 1]])
    out_a = _rdp_chain(chain_a, epsilon)
    out_b = _rdp_chain(chain_b, epsilon)
    merged = np.concatenate([out_a[:-1], out_b[:-1]])
    if merged.shape[0] >= 3:
        return merged
    # over-aggressive epsilon: fall back to the split anchors plus the most
    # distant remaining vertex so the polygon stays a polygon
    anchors = {i, j}
    rest = [k for k in range(poly.shape[0]) if k not in anchors]
    dist = _point_segment_distance(poly[rest], poly[i], poly[j])
    anchors.add(rest[int(np.argmax(dist))])
    order = sorted(anchors)
    return poly[order]


def filter_fragments(
    labels: list[InstanceLabel],
    width: int,
    height: int,
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC,
) -> list[InstanceLabel]:
    """Drop polygons below the area fraction; drop instances left empty."""
    if not (0.0 <= min_area_frac < 1.0):
        raise ValueError("min_area_frac must be in [0, 1)")
    threshold = min_area_frac * width * height
    out = []
    for label in labels:
        kept = [
            (p, a)
            for p, a in zip(label.polygons, label.polygon_areas)
            if a >= threshold
        ]
        if kept:
            polys, areas = zip(*kept)
            out.append(replace(label, polygons=polys, polygon_areas=areas))
    return out


def to_yolo_lines(labels: list[InstanceLabel], width: int, height: int) -> list[YoloLine]:
    """One line per polygon: class index then x/width, y/height pairs."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    lines = []
    for label in labels:
        for poly in label.polygons:
            if poly.shape[0] < 3:
                raise RuntimeError("internal error: polygon with fewer than 3 vertices")
            coords = np.empty(poly.shape[0] * 2)
            coords[0::2] = np.clip(poly[:, 0] / width, 0.0, 1.0)
            coords[1::2] = np.clip(poly[:, 1] / height, 0.0, 1.0)
            lines.append(YoloLine(class_index=label.class_id, coords=tuple(coords)))
    return lines


def serialize_yolo(lines: list[YoloLine]) -> str:
    """Newline-terminated label file content; empty string for no lines."""
    return "".join(line.serialize() + "\n" for line in lines)


def write_label_file(path: str | Path, lines: list[YoloLine]) -> None:
    Path(path).write_text(serialize_yolo(lines), encoding="utf-8")


def bbox_from_polygons(label: InstanceLabel) -> tuple[float, float, float, float]:
    """Tight (x_min, y_min, x_max, y_max) over all polygon vertices."""
    if not label.polygons:
        raise ValueError("label has no polygons")
    allv = np.concatenate(label.polygons)
    return (
        float(allv[:, 0].min()),
        float(allv[:, 1].min()),
        float(allv[:, 0].max()),
        float(allv[:, 1].max()),
    )


def polygon_mask(polygons: list[np.ndarray], width: int, height: int) -> np.ndarray:
    """Rasterize polygons to a boolean mask (even-odd rule, pixel centers)."""
    mask = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        poly = np.asarray(poly, dtype=float).reshape(-1, 2)
        if poly.shape[0] < 3:
            continue
        x = poly[:, 0]
        y = poly[:, 1]
        x2 = np.roll(x, -1)
        y2 = np.roll(y, -1)
        ymin = max(int(np.floor(y.min() - 0.5)), 0)
        ymax = min(int(np.ceil(y.max() + 0.5)), height)
        for row in range(ymin, ymax):
            py = row + 0.5
            # half-open rule on y avoids double counting vertices on scanlines
            crosses = (y <= py) != (y2 <= py)
            if not crosses.any():
                continue
            xs = x[crosses] + (py - y[crosses]) * (x2[crosses] - x[crosses]) / (y2[crosses] - y[crosses])
            xs.sort()
            for k in range(0, xs.size - 1, 2):
                c0 = max(int(np.ceil(xs[k] - 0.5)), 0)
                c1 = min(int(np.floor(xs[k + 1] - 0.5)), width - 1)
                if c1 >= c0:
                    mask[row, c0 : c1 + 1] ^= True
    return mask


def labels_from_id_map(
    ids: np.ndarray,
    class_by_instance: dict[int, int],
    simplify_epsilon: float = DEFAULT_SIMPLIFY_EPSILON,
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC,
) -> list[InstanceLabel]:
    """Full labeling pass for one ID map; returns filtered instance labels."""
    ids = np.asarray(ids)
    height, width = ids.shape
    labels = []
    for instance_id in sorted(class_by_instance):
        regions = extract_components(ids, instance_id)
        if not regions:
            continue
        polygons = []
        areas = []
        for region in regions:
            contour = trace_contour(region)
            polygons.append(simplify_polygon(contour, simplify_epsilon))
            areas.append(int(region.sum()))
        labels.append(
            InstanceLabel(
                class_id=class_by_instance[instance_id],
                polygons=tuple(polygons),
                polygon_areas=tuple(areas),
            )
        )
    return filter_fragments(labels, width, height, min_area_frac)


def parse_yolo_line(line: str, with_confidence: bool = False):
    """Parse one label line -> (class_index, coords array (K,2)[, confidence]).

    Raises ValueError on malformed content (odd coordinate count, <3 points,
    out-of-range values, non-numeric tokens).
    """
    tokens = line.split()
    if not tokens:
        raise ValueError("empty label line")
    try:
        class_index = int(tokens[0])
        values = [float(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ValueError(f"non-numeric token in label line: {exc}") from None
    confidence = None
    if with_confidence:
        if len(values) < 1:
            raise ValueError("prediction line missing confidence")
        confidence = values[-1]
        values = values[:-1]
        if not (0.0 <= confidence <= 1.0):
            raise ValueError(f"confidence {confidence} outside [0, 1]")
    if len(values) % 2 != 0 or len(values) < 6:
        raise ValueError("label line needs an even coordinate count >= 6")
    coords = np.asarray(values, dtype=float).reshape(-1, 2)
    if coords.min() < -1e-9 or coords.max() > 1.0 + 1e-9:
        raise ValueError("normalized coordinates outside [0, 1]")
    if with_confidence:
        return class_index, coords, confidence
    return class_index, coords
