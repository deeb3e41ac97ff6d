"""End-to-end dataset pipeline: asset preparation, per-frame scene
generation and rendering, labeling, dataset layout, and validation.

Every frame is produced by a pure function of (config, master seed, frame
index), so datasets are byte-reproducible and frames can run in any order
across workers.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import images
from .cameras import frame_time, sample_path
from .compose import composite_frame, process_shadow_map
from .config import AssetConfig, ProjectConfig
from .labeling import labels_from_id_map, polygon_mask, serialize_yolo, to_yolo_lines
from .mesh_render import render_id_map, render_shadow_pass
from .meshes import TriMesh, align_mesh_to_splat, load_obj, quad_mesh, save_obj
from .physics import SpawnAsset, settle, spawn_objects, sync_splat_to_mesh
from .raster import render_appearance
from .splats import MaskedView, SplatCloud, load_splat_ply, save_splat_ply, strip_background

PIPELINE_VERSION = "splatgen-0.1.0"
FAILURE_TRIPWIRE = 0.10


class PrepareError(RuntimeError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PreparedAsset:
    name: str
    class_id: int
    mesh: TriMesh
    splat: SplatCloud


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _asset_cache_key(asset: AssetConfig) -> str:
    h = hashlib.sha256()
    h.update(_file_digest(asset.splat_path).encode())
    h.update(_file_digest(asset.mesh_path).encode())
    t = asset.recon_transform
    h.update(np.asarray([t.scale, *t.rotation, *t.translation]).tobytes())
    if asset.masks_dir is not None:
        for p in sorted(asset.masks_dir.glob("**/*")):
            if p.is_file():
                h.update(p.name.encode())
                h.update(_file_digest(p).encode())
    return h.hexdigest()[:16]


def _load_masked_views(masks_dir: Path) -> list[MaskedView]:
    """Read a views.json + mask PNG bundle describing per-view object masks."""
    from .cameras import PinholeCamera, Pose

    manifest_path = masks_dir / "views.json"
    if not manifest_path.exists():
        raise PrepareError(f"{masks_dir}: missing views.json")
    spec = json.loads(manifest_path.read_text(encoding="utf-8"))
    views = []
    for entry in spec.get("views", []):
        cam = PinholeCamera(**entry["camera"])
        pose = Pose(
            rotation=np.asarray(entry["pose"]["rotation"], dtype=float),
            translation=np.asarray(entry["pose"]["translation"], dtype=float),
        )
        mask = images.load_mask_png(masks_dir / entry["mask"])
        views.append(MaskedView(camera=cam, pose=pose, mask=mask))
    if not views:
        raise PrepareError(f"{masks_dir}: views.json declares no views")
    return views


def prepare_assets(config: ProjectConfig, force: bool = False) -> tuple[list[PreparedAsset], SplatCloud | None, list[str]]:
    """Load, background-strip, and align all assets, with a content-hash cache.

    Returns (assets ordered by class_id, environment splat, per-asset error
    strings). Cached results are reused when inputs are unchanged.
    """
    cache = config.cache_dir
    cache.mkdir(parents=True, exist_ok=True)
    prepared: list[PreparedAsset] = []
    errors: list[str] = []
    for asset in sorted(config.assets, key=lambda a: a.class_id):
        try:
            prepared.append(_prepare_one(asset, cache, force))
        except Exception as exc:  # noqa: BLE001 - collected into the error report
            errors.append(f"{asset.name}: {exc}")
    environment = None
    if config.environment_splat is not None:
        try:
            environment = load_splat_ply(config.environment_splat)
        except Exception as exc:  # noqa: BLE001
            errors.append(f"environment: {exc}")
    return prepared, environment, errors


def _prepare_one(asset: AssetConfig, cache: Path, force: bool) -> PreparedAsset:
    if not asset.splat_path.exists():
        raise PrepareError(f"missing splat file {asset.splat_path}")
    if not asset.mesh_path.exists():
        raise PrepareError(f"missing mesh file {asset.mesh_path}")
    key = _asset_cache_key(asset)
    splat_out = cache / f"{asset.name}-{key}.ply"
    mesh_out = cache / f"{asset.name}-{key}.obj"
    if not force and splat_out.exists() and mesh_out.exists():
        mesh = load_obj(mesh_out, class_id=asset.class_id)
        return PreparedAsset(asset.name, asset.class_id, mesh, load_splat_ply(splat_out))

    splat = load_splat_ply(asset.splat_path)
    splat.validate()
    if asset.masks_dir is not None:
        views = _load_masked_views(asset.masks_dir)
        splat = strip_background(splat, views)
    mesh = load_obj(asset.mesh_path, class_id=asset.class_id)
    mesh = align_mesh_to_splat(mesh, asset.recon_transform)
    save_splat_ply(splat, splat_out)
    save_obj(mesh, mesh_out)
    return PreparedAsset(asset.name, asset.class_id, mesh, splat)


def table_mesh(config: ProjectConfig, margin_frac: float = 0.3) -> TriMesh:
    """Tabletop quad for the shadow pass, slightly larger than the workspace."""
    lo, hi = config.workspace_min, config.workspace_max
    mx = margin_frac * (hi[0] - lo[0])
    my = margin_frac * (hi[1] - lo[1])
    z = lo[2]
    return quad_mesh(
        (lo[0] - mx, lo[1] - my, z),
        (hi[0] + mx, lo[1] - my, z),
        (hi[0] + mx, hi[1] + my, z),
        (lo[0] - mx, hi[1] + my, z),
    ).with_ids(instance_id=1000000, class_id=0)


def frame_seed(master_seed: int, frame_index: int) -> int:
    digest = hashlib.blake2b(
        f"{master_seed}:{frame_index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFFFFFFFFFF


@dataclass
class FrameResult:
    frame_index: int
    seed: int
    image: np.ndarray
    label_text: str
    passes: dict[str, np.ndarray]
    camera_pose: dict
    object_poses: list[dict]
    label_min_iou: float | None


def render_frame(
    config: ProjectConfig,
    assets: list[PreparedAsset],
    environment: SplatCloud | None,
    frame_index: int,
    self_check: bool | None = None,
) -> FrameResult:
    """Run one full frame: settle a scene, render all passes, composite, label."""
    seed = frame_seed(config.seed, frame_index)
    spawn_assets = [SpawnAsset(mesh=a.mesh, splat=a.splat, class_id=a.class_id) for a in assets]
    world = spawn_objects(
        spawn_assets,
        (config.physics.count_min, config.physics.count_max),
        config.workspace_min,
        config.workspace_max,
        rng_seed=seed,
    )
    result = settle(world, max_steps=config.physics.max_steps,
                    ke_threshold=config.physics.ke_threshold, dt=config.physics.dt)
    state = result.state

    t = frame_time(frame_index, config.frame_count)
    pose = sample_path(config.camera_path, t)
    light = sample_path(config.light_path, t)

    object_meshes = []
    clouds = [] if environment is None else [environment]
    class_by_instance: dict[int, int] = {}
    for body in state.bodies:
        posed = body.posed_mesh().with_ids(instance_id=body.instance_id)
        object_meshes.append(posed)
        class_by_instance[body.instance_id] = posed.class_id
        clouds.append(
            sync_splat_to_mesh(spawn_assets[body.asset_index].splat, body.world_transform())
        )

    appearance = render_appearance(clouds, config.camera, pose, config.background)
    shadow_meshes = [table_mesh(config)] + object_meshes
    shadow_raw = render_shadow_pass(shadow_meshes, config.camera, pose, light)
    ids = render_id_map(object_meshes, config.camera, pose)

    composite = composite_frame(appearance, shadow_raw, config.composite, config.augment, frame_index)

    labels = labels_from_id_map(
        ids,
        class_by_instance,
        simplify_epsilon=config.labels.simplify_epsilon,
        min_area_frac=config.labels.min_area_frac,
    )
    lines = to_yolo_lines(labels, config.image_width, config.image_height)
    label_text = serialize_yolo(lines)

    min_iou = None
    run_check = config.labels.self_check if self_check is None else self_check
    if run_check:
        ious = _self_check_ious(ids, class_by_instance, config)
        min_iou = min(ious) if ious else None

    return FrameResult(
        frame_index=frame_index,
        seed=seed,
        image=composite,
        label_text=label_text,
        passes={
            "appearance": appearance,
            "shadow_raw": shadow_raw,
            "shadow_processed": process_shadow_map(shadow_raw, config.composite),
            "id_map": ids,
            "composite": composite,
        },
        camera_pose={
            "rotation": [float(v) for v in pose.rotation],
            "translation": [float(v) for v in pose.translation],
        },
        object_poses=[
            {
                "instance_id": body.instance_id,
                "class_id": class_by_instance[body.instance_id],
                "position": [float(v) for v in body.position],
                "orientation": [float(v) for v in body.orientation],
            }
            for body in state.bodies
        ],
        label_min_iou=min_iou,
    )


def _self_check_ious(ids: np.ndarray, class_by_instance: dict[int, int], config: ProjectConfig) -> list[float]:
    """Per-instance IoU between emitted polygons and the raw ID mask."""
    from .labeling import extract_components, simplify_polygon, trace_contour, filter_fragments, InstanceLabel

    height, width = ids.shape
    ious = []
    for instance_id in sorted(class_by_instance):
        regions = extract_components(ids, instance_id)
        if not regions:
            continue
        polygons = []
        areas = []
        for region in regions:
            contour = trace_contour(region)
            polygons.append(simplify_polygon(contour, config.labels.simplify_epsilon))
            areas.append(int(region.sum()))
        label = InstanceLabel(class_id=class_by_instance[instance_id], polygons=tuple(polygons),
                              polygon_areas=tuple(areas))
        kept = filter_fragments([label], width, height, config.labels.min_area_frac)
        if not kept:
            continue
        mask = polygon_mask(list(kept[0].polygons), width, height)
        target = np.zeros((height, width), dtype=bool)
        for region, area in zip(regions, areas):
            if area >= config.labels.min_area_frac * width * height:
                target |= region
        union = np.logical_or(mask, target).sum()
        if union == 0:
            continue
        ious.append(float(np.logical_and(mask, target).sum() / union))
    return ious


def split_assignment(frame_count: int, train_fraction: float, seed: int) -> dict[int, str]:
    """Deterministic seeded shuffle into exact train/val counts."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5F11)))
    order = rng.permutation(frame_count)
    n_train = int(round(frame_count * train_fraction))
    assignment = {}
    for rank, frame in enumerate(order):
        assignment[int(frame)] = "train" if rank < n_train else "val"
    return assignment


def generate_dataset(
    config: ProjectConfig,
    assets: list[PreparedAsset],
    environment: SplatCloud | None,
    workers: int = 1,
    progress=None,
) -> dict:
    """Generate the full dataset tree; returns the manifest dict.

    Frame failures are skipped and recorded; more than 10% failures raises
    GenerationError after the run.
    """
    out = config.output_dir
    for sub in ("images/train", "images/val", "labels/train", "labels/val"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    assignment = split_assignment(config.frame_count, config.train_fraction, config.seed)

    records: list[dict] = []
    failures: list[dict] = []

    def run(frame_index: int):
        name = f"{config.name}_{frame_index:05d}"
        split = assignment[frame_index]
        image_rel = f"images/{split}/{name}.png"
        label_rel = f"labels/{split}/{name}.txt"
        frame = render_frame(config, assets, environment, frame_index)
        images.save_png(out / image_rel, frame.image)
        (out / label_rel).write_text(frame.label_text, encoding="utf-8")
        return {
            "frame_index": frame_index,
            "image": image_rel,
            "label": label_rel,
            "split": split,
            "seed": frame.seed,
            "camera_pose": frame.camera_pose,
            "object_poses": frame.object_poses,
            "label_min_iou": frame.label_min_iou,
        }

    frames = list(range(config.frame_count))
    if workers <= 1:
        iterator = map(_guarded(run, failures), frames)
        for record in iterator:
            if record is not None:
                records.append(record)
            if progress is not None:
                progress()
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for record in pool.map(_guarded(run, failures), frames):
                if record is not None:
                    records.append(record)
                if progress is not None:
                    progress()

    records.sort(key=lambda r: r["frame_index"])
    manifest = {
        "version": PIPELINE_VERSION,
        "project": config.name,
        "master_seed": config.seed,
        "frame_count": config.frame_count,
        "image_size": [config.image_width, config.image_height],
        "classes": config.class_names,
        "records": records,
        "failures": failures,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    _write_class_file(out, config.class_names)
    if config.frame_count and len(failures) > FAILURE_TRIPWIRE * config.frame_count:
        raise GenerationError(
            f"{len(failures)}/{config.frame_count} frames failed (over the {FAILURE_TRIPWIRE:.0%} tripwire)"
        )
    return manifest


def _guarded(fn, failures: list[dict]):
    def wrapper(frame_index: int):
        try:
            return fn(frame_index)
        except Exception as exc:  # noqa: BLE001 - frame failures are data, not crashes
            failures.append({"frame_index": frame_index, "error": str(exc)})
            return None

    return wrapper


def _write_class_file(out: Path, class_names: list[str]) -> None:
    import yaml

    payload = {
        "names": {i: name for i, name in enumerate(class_names)},
        "nc": len(class_names),
    }
    (out / "dataset.yaml").write_text(yaml.safe_dump(payload, sort_keys=True), encoding="utf-8")


def preview_frame(
    config: ProjectConfig,
    assets: list[PreparedAsset],
    environment: SplatCloud | None,
    frame_index: int,
    out_dir: str | Path,
    raw: bool = False,
) -> list[Path]:
    """Write one frame's intermediate passes and composite for inspection."""
    if not (0 <= frame_index < config.frame_count):
        raise ValueError(f"frame index {frame_index} outside 0..{config.frame_count - 1}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = render_frame(config, assets, environment, frame_index)
    written = []
    for name in ("appearance", "shadow_raw", "shadow_processed", "composite"):
        path = out / f"frame{frame_index:05d}_{name}.png"
        images.save_png(path, frame.passes[name])
        written.append(path)
        if raw and frame.passes[name].ndim == 2:
            rp = out / f"frame{frame_index:05d}_{name}.raw"
            images.save_raw(rp, frame.passes[name])
            written.append(rp)
    id_path = out / f"frame{frame_index:05d}_id_map.png"
    images.save_png(id_path, images.id_map_to_rgb(frame.passes["id_map"]))
    written.append(id_path)
    return written


def validate_dataset(dataset_dir: str | Path, class_count: int | None = None) -> list[str]:
    """Structural dataset check; returns a list of problem strings (empty = ok)."""
    from .labeling import parse_yolo_line

    root = Path(dataset_dir)
    problems = []
    manifest_path = root / "manifest.json"
    manifest = None
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    else:
        problems.append("missing manifest.json")

    image_count = 0
    for split in ("train", "val"):
        img_dir = root / "images" / split
        if not img_dir.is_dir():
            problems.append(f"missing images/{split}")
            continue
        for img in sorted(img_dir.glob("*.png")):
            image_count += 1
            label = root / "labels" / split / (img.stem + ".txt")
            if not label.exists():
                problems.append(f"{img.name}: missing label file")
                continue
            for lineno, line in enumerate(label.read_text(encoding="utf-8").splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    class_id, _ = parse_yolo_line(line)
                except ValueError as exc:
                    problems.append(f"{label.name}:{lineno}: {exc}")
                    continue
                if class_count is not None and not (0 <= class_id < class_count):
                    problems.append(f"{label.name}:{lineno}: class index {class_id} out of range")
    if manifest is not None and len(manifest.get("records", [])) != image_count:
        problems.append(
            f"manifest records ({len(manifest.get('records', []))}) != image count ({image_count})"
        )
    return problems
