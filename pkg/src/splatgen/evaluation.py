"""Detection/segmentation metrics: IoU, greedy matching, 101-point AP,
and mAP50 / mAP50-95 for boxes and masks.

The matching convention is the common one: per class, detections sorted by
descending confidence greedily claim the unmatched ground truth with the
highest IoU at or above the threshold; leftovers are false positives and
false negatives. AP integrates the monotone precision envelope at 101
evenly spaced recall points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labeling import parse_yolo_line, polygon_mask

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    confidence: float
    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max (pixels)
    polygons: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be in [0, 1]")
        object.__setattr__(
            self, "polygons", tuple(np.asarray(p, dtype=float).reshape(-1, 2) for p in self.polygons)
        )


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]
    polygons: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "polygons", tuple(np.asarray(p, dtype=float).reshape(-1, 2) for p in self.polygons)
        )


@dataclass
class EvalReport:
    box_map50: float
    box_map50_95: float
    mask_map50: float
    mask_map50_95: float
    # per threshold: {class_id: AP or None (undefined: no gts, no dets)}
    box_ap: dict[float, dict[int, float | None]] = field(default_factory=dict)
    mask_ap: dict[float, dict[int, float | None]] = field(default_factory=dict)
    # per threshold aggregate counts over classes
    box_counts: dict[float, dict[str, int]] = field(default_factory=dict)
    mask_counts: dict[float, dict[str, int]] = field(default_factory=dict)

    def to_json(self) -> str:
        def ap_table(table):
            return {f"{t:.2f}": {str(k): v for k, v in aps.items()} for t, aps in table.items()}

        payload = {
            "box_map50": self.box_map50,
            "box_map50_95": self.box_map50_95,
            "mask_map50": self.mask_map50,
            "mask_map50_95": self.mask_map50_95,
            "box_ap": ap_table(self.box_ap),
            "mask_ap": ap_table(self.mask_ap),
            "box_counts": {f"{t:.2f}": c for t, c in self.box_counts.items()},
            "mask_counts": {f"{t:.2f}": c for t, c in self.mask_counts.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("Box mAP50", self.box_map50),
            ("Box mAP50-95", self.box_map50_95),
            ("Mask mAP50", self.mask_map50),
            ("Mask mAP50-95", self.mask_map50_95),
        ]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {value:8.4f}" for name, value in rows]
        counts = self.box_counts.get(0.5)
        if counts:
            lines.append(
                f"{'Box TP/FP/FN @0.50':<{width}}  "
                f"{counts['tp']}/{counts['fp']}/{counts['fn']}"
            )
        return "\n".join(lines) + "\n"


def iou_box(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    """Intersection over union of two (x_min, y_min, x_max, y_max) boxes."""
    ix0 = max(a[0], b[0])
    iy0 = max(a[1], b[1])
    ix1 = min(a[2], b[2])
    iy1 = min(a[3], b[3])
    iw = max(0.0, ix1 - ix0)
    ih = max(0.0, iy1 - iy0)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def iou_mask(a: list[np.ndarray], b: list[np.ndarray], width: int, height: int) -> float:
    """IoU of two polygon sets rasterized at image resolution."""
    ma = polygon_mask(list(a), width, height)
    mb = polygon_mask(list(b), width, height)
    union = int(np.logical_or(ma, mb).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(ma, mb).sum())
    return inter / union


def match_predictions(
    dets: list[Detection],
    gts: list[GroundTruth],
    iou_fn,
    threshold: float,
) -> tuple[list[tuple[Detection, bool]], int]:
    """Greedy matching of detections to ground truths at one IoU threshold.

    Per class, detections sorted by descending confidence (ties keep input
    order) claim the unmatched same-class, same-image ground truth with the
    highest IoU >= threshold. Returns (detection, is_tp) pairs in matching
    order plus the count of unmatched ground truths (false negatives).
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError("IoU threshold must be in (0, 1]")
    matched: list[bool] = [False] * len(gts)
    results: list[tuple[Detection, bool]] = []
    classes = sorted({d.class_id for d in dets} | {g.class_id for g in gts})
    for c in classes:
        class_dets = _sort_by_confidence([d for d in dets if d.class_id == c])
        gt_idx = [j for j, g in enumerate(gts) if g.class_id == c]
        for det in class_dets:
            best_iou = 0.0
            best_j = -1
            for j in gt_idx:
                if matched[j] or gts[j].image_id != det.image_id:
                    continue
                iou = iou_fn(det, gts[j])
                if iou >= threshold and iou > best_iou:
                    best_iou = iou
                    best_j = j
            if best_j >= 0:
                matched[best_j] = True
                results.append((det, True))
            else:
                results.append((det, False))
    fn = matched.count(False)
    return results, fn


def average_precision(flags: list[bool], num_gt: int) -> float | None:
    """101-point interpolated AP from confidence-ordered TP/FP flags.

    Returns None when undefined (no ground truths and no detections); zero
    ground truths with detections scores 0.
    """
    if num_gt < 0:
        raise ValueError("num_gt must be >= 0")
    if num_gt == 0:
        return None if not flags else 0.0
    if not flags:
        return 0.0
    tp = np.cumsum([1.0 if f else 0.0 for f in flags])
    fp = np.cumsum([0.0 if f else 1.0 for f in flags])
    recall = tp / num_gt
    precision = tp / (tp + fp)
    # monotone non-increasing envelope from the right
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for i in range(101):
        r = i / 100.0
        idx = np.searchsorted(recall, r, side="left")
        if idx < len(envelope):
            ap += float(envelope[idx])
    return ap / 101.0


def _sort_by_confidence(dets: list[Detection]) -> list[Detection]:
    # stable sort keeps input order for equal confidences
    return sorted(dets, key=lambda d: -d.confidence)


def _class_ap(
    dets: list[Detection],
    gts: list[GroundTruth],
    iou_fn,
    threshold: float,
) -> tuple[float | None, int, int, int]:
    """AP + (tp, fp, fn) for one class over all images at one threshold."""
    results, fn = match_predictions(dets, gts, iou_fn, threshold)
    flags = [is_tp for _, is_tp in results]
    ap = average_precision(flags, len(gts))
    return ap, flags.count(True), flags.count(False), fn


def _mean_defined(values: list[float | None]) -> float:
    defined = [v for v in values if v is not None]
    if not defined:
        return 0.0
    return float(np.mean(defined))


def evaluate(
    dets: list[Detection],
    gts: list[GroundTruth],
    image_sizes: dict[str, tuple[int, int]],
    thresholds: tuple[float, ...] = IOU_THRESHOLDS,
) -> EvalReport:
    """Full box + mask evaluation. ``image_sizes`` maps image id -> (w, h)."""
    if not gts:
        raise ValueError("evaluation is undefined without ground truths")
    classes = sorted({g.class_id for g in gts} | {d.class_id for d in dets})

    def box_iou_fn(det: Detection, gt: GroundTruth) -> float:
        return iou_box(det.box, gt.box)

    mask_iou_cache: dict[tuple[int, int], float] = {}

    def mask_iou_fn(det: Detection, gt: GroundTruth) -> float:
        key = (id(det), id(gt))
        if key not in mask_iou_cache:
            w, h = image_sizes[det.image_id]
            mask_iou_cache[key] = iou_mask(list(det.polygons), list(gt.polygons), w, h)
        return mask_iou_cache[key]

    for det in dets:
        if not det.polygons:
            raise ValueError(f"detection on {det.image_id!r} lacks mask polygons")
        if det.image_id not in image_sizes:
            raise ValueError(f"no image size registered for {det.image_id!r}")
    for gt in gts:
        if not gt.polygons:
            raise ValueError(f"ground truth on {gt.image_id!r} lacks mask polygons")
        if gt.image_id not in image_sizes:
            raise ValueError(f"no image size registered for {gt.image_id!r}")

    report = EvalReport(0.0, 0.0, 0.0, 0.0)
    per_class_box: dict[int, list[float | None]] = {c: [] for c in classes}
    per_class_mask: dict[int, list[float | None]] = {c: [] for c in classes}
    for threshold in thresholds:
        box_aps: dict[int, float | None] = {}
        mask_aps: dict[int, float | None] = {}
        box_tot = {"tp": 0, "fp": 0, "fn": 0}
        mask_tot = {"tp": 0, "fp": 0, "fn": 0}
        for c in classes:
            cdets = [d for d in dets if d.class_id == c]
            cgts = [g for g in gts if g.class_id == c]
            ap, tp, fp, fn = _class_ap(cdets, cgts, box_iou_fn, threshold)
            box_aps[c] = ap
            box_tot["tp"] += tp
            box_tot["fp"] += fp
            box_tot["fn"] += fn
            per_class_box[c].append(ap)
            ap, tp, fp, fn = _class_ap(cdets, cgts, mask_iou_fn, threshold)
            mask_aps[c] = ap
            mask_tot["tp"] += tp
            mask_tot["fp"] += fp
            mask_tot["fn"] += fn
            per_class_mask[c].append(ap)
        report.box_ap[threshold] = box_aps
        report.mask_ap[threshold] = mask_aps
        report.box_counts[threshold] = box_tot
        report.mask_counts[threshold] = mask_tot

    report.box_map50 = _mean_defined(list(report.box_ap[thresholds[0]].values()))
    report.mask_map50 = _mean_defined(list(report.mask_ap[thresholds[0]].values()))
    # per class: mean AP over thresholds, then mean over classes
    report.box_map50_95 = _mean_defined([_mean_over_thresholds(per_class_box[c]) for c in classes])
    report.mask_map50_95 = _mean_defined([_mean_over_thresholds(per_class_mask[c]) for c in classes])
    return report


def _mean_over_thresholds(aps: list[float | None]) -> float | None:
    defined = [a for a in aps if a is not None]
    if not defined:
        return None
    return float(np.mean(defined))


def load_yolo_directory(
    directory: str | Path,
    image_sizes: dict[str, tuple[int, int]],
    with_confidence: bool,
) -> list:
    """Load a directory of YOLO label files into detections or ground truths.

    Image ids are the file stems; coordinates are denormalized using
    ``image_sizes``. Malformed lines raise ValueError naming file and line.
    """
    directory = Path(directory)
    out: list = []
    for path in sorted(directory.glob("*.txt")):
        image_id = path.stem
        if image_id not in image_sizes:
            raise ValueError(f"{path.name}: no image size registered for {image_id!r}")
        w, h = image_sizes[image_id]
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not raw.strip():
                continue
            try:
                parsed = parse_yolo_line(raw, with_confidence=with_confidence)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if with_confidence:
                class_id, coords, confidence = parsed
            else:
                class_id, coords = parsed
                confidence = None
            pixels = coords * np.array([w, h], dtype=float)
            box = (
                float(pixels[:, 0].min()),
                float(pixels[:, 1].min()),
                float(pixels[:, 0].max()),
                float(pixels[:, 1].max()),
            )
            if with_confidence:
                out.append(
                    Detection(
                        image_id=image_id,
                        class_id=class_id,
                        confidence=float(confidence),
                        box=box,
                        polygons=(pixels,),
                    )
                )
            else:
                out.append(GroundTruth(image_id=image_id, class_id=class_id, box=box, polygons=(pixels,)))
    return out
