"""Declarative project configuration for the batch pipeline.

Configs are TOML files; paths inside them resolve relative to the config
file. CLI flags override config values, which override the defaults here.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cameras import LightRig, MotionPath, PinholeCamera, Pose, look_at_pose
from .compose import AugmentParams, CompositeParams
from .geometry import SimilarityTransform


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AssetConfig:
    name: str
    class_id: int
    splat_path: Path
    mesh_path: Path
    recon_transform: SimilarityTransform = field(default_factory=SimilarityTransform.identity)
    masks_dir: Path | None = None


@dataclass(frozen=True)
class PhysicsConfig:
    dt: float = 1.0 / 120.0
    max_steps: int = 2400
    ke_threshold: float = 1e-5
    count_min: int = 2
    count_max: int = 6


@dataclass(frozen=True)
class LabelConfig:
    simplify_epsilon: float = 1.5
    min_area_frac: float = 1e-4
    self_check: bool = True


@dataclass(frozen=True)
class ProjectConfig:
    name: str
    seed: int
    frame_count: int
    image_width: int
    image_height: int
    train_fraction: float
    val_fraction: float
    workspace_min: np.ndarray
    workspace_max: np.ndarray
    assets: tuple[AssetConfig, ...]
    environment_splat: Path | None
    camera: PinholeCamera
    camera_path: MotionPath
    light_path: MotionPath
    composite: CompositeParams
    augment: AugmentParams
    physics: PhysicsConfig
    labels: LabelConfig
    background: np.ndarray
    sh_rotation: str
    cache_dir: Path
    output_dir: Path

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if abs(self.train_fraction + self.val_fraction - 1.0) > 1e-9:
            raise ConfigError("train and val fractions must sum to 1")
        class_ids = sorted(a.class_id for a in self.assets)
        if class_ids != list(range(len(class_ids))):
            raise ConfigError("asset class_ids must be dense from 0")
        object.__setattr__(self, "workspace_min", np.asarray(self.workspace_min, dtype=float))
        object.__setattr__(self, "workspace_max", np.asarray(self.workspace_max, dtype=float))
        if np.any(self.workspace_max <= self.workspace_min):
            raise ConfigError("workspace bounds require min < max componentwise")
        object.__setattr__(self, "background", np.asarray(self.background, dtype=float).reshape(3))

    @property
    def class_names(self) -> list[str]:
        ordered = sorted(self.assets, key=lambda a: a.class_id)
        return [a.name for a in ordered]


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigError(f"missing required config key {context}.{key}")
    return table[key]


def _pose_from_table(entry: dict, context: str) -> Pose:
    if "position" in entry and "look_at" in entry:
        up = entry.get("up", (0.0, 0.0, 1.0))
        return look_at_pose(entry["position"], entry["look_at"], up)
    if "rotation" in entry and "translation" in entry:
        return Pose(rotation=np.asarray(entry["rotation"], dtype=float),
                    translation=np.asarray(entry["translation"], dtype=float))
    raise ConfigError(f"{context}: keyframe needs position+look_at or rotation+translation")


def _camera_path(table: dict) -> MotionPath:
    frames = table.get("keyframes")
    if not frames:
        raise ConfigError("camera needs at least one keyframe")
    times = [float(_require(k, "time", "camera.keyframes")) for k in frames]
    poses = [_pose_from_table(k, "camera.keyframes") for k in frames]
    return MotionPath(times=np.asarray(times), values=tuple(poses),
                      interpolation=table.get("interpolation", "linear"))


def _light_path(table: dict) -> MotionPath:
    kind = table.get("kind", "directional")
    color = table.get("color", (1.0, 1.0, 1.0))
    intensity = float(table.get("intensity", 1.0))
    ambient = float(table.get("ambient", 0.3))
    frames = table.get("keyframes")
    if not frames:
        raise ConfigError("light needs at least one keyframe")
    times = []
    lights = []
    for k in frames:
        times.append(float(_require(k, "time", "light.keyframes")))
        if kind == "directional":
            rig = LightRig(kind=kind, direction=np.asarray(_require(k, "direction", "light.keyframes"), dtype=float),
                           color=color, intensity=intensity, ambient=ambient)
        else:
            rig = LightRig(kind=kind, position=np.asarray(_require(k, "position", "light.keyframes"), dtype=float),
                           color=color, intensity=intensity, ambient=ambient)
        lights.append(rig)
    return MotionPath(times=np.asarray(times), values=tuple(lights),
                      interpolation=table.get("interpolation", "linear"))


def _similarity_from_table(entry: dict) -> SimilarityTransform:
    return SimilarityTransform(
        scale=float(entry.get("scale", 1.0)),
        rotation=np.asarray(entry.get("rotation", (1.0, 0.0, 0.0, 0.0)), dtype=float),
        translation=np.asarray(entry.get("translation", (0.0, 0.0, 0.0)), dtype=float),
    )


def load_config(path: str | Path, overrides: dict | None = None) -> ProjectConfig:
    """Parse a TOML project config; ``overrides`` maps dotted keys (e.g.
    ``compositing.blur_sigma``) to replacement values."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent

    def apply_override(section: str, key: str, current):
        if overrides and f"{section}.{key}" in overrides:
            return overrides[f"{section}.{key}"]
        return current

    project = raw.get("project", {})
    name = project.get("name", path.stem)
    seed = int(apply_override("project", "seed", project.get("seed", 0)))
    frame_count = int(apply_override("project", "frame_count", project.get("frame_count", 1)))

    workspace = raw.get("workspace", {})
    ws_min = _require(workspace, "min", "workspace")
    ws_max = _require(workspace, "max", "workspace")

    assets = []
    for i, entry in enumerate(raw.get("assets", [])):
        masks = entry.get("masks")
        assets.append(
            AssetConfig(
                name=entry.get("name", f"asset{i}"),
                class_id=int(entry.get("class_id", i)),
                splat_path=base / _require(entry, "splat", f"assets[{i}]"),
                mesh_path=base / _require(entry, "mesh", f"assets[{i}]"),
                recon_transform=_similarity_from_table(entry.get("recon_transform", {})),
                masks_dir=(base / masks) if masks else None,
            )
        )
    if not assets:
        raise ConfigError("config declares no assets")

    environment = raw.get("environment", {})
    env_splat = environment.get("splat")

    cam_table = raw.get("camera", {})
    camera = PinholeCamera(
        fx=float(_require(cam_table, "fx", "camera")),
        fy=float(_require(cam_table, "fy", "camera")),
        cx=float(_require(cam_table, "cx", "camera")),
        cy=float(_require(cam_table, "cy", "camera")),
        width=int(apply_override("camera", "width", project.get("image_width", 640))),
        height=int(apply_override("camera", "height", project.get("image_height", 480))),
        near=float(cam_table.get("near", 0.01)),
        far=float(cam_table.get("far", 100.0)),
    )

    comp_table = raw.get("compositing", {})
    composite = CompositeParams(
        blur_sigma=float(apply_override("compositing", "blur_sigma", comp_table.get("blur_sigma", 5.0))),
        sigmoid_k=float(apply_override("compositing", "sigmoid_k", comp_table.get("sigmoid_k", 10.0))),
        sigmoid_c=float(apply_override("compositing", "sigmoid_c", comp_table.get("sigmoid_c", 0.5))),
        shadow_floor=float(apply_override("compositing", "shadow_floor", comp_table.get("shadow_floor", 0.4))),
        highlight_threshold=float(
            apply_override("compositing", "highlight_threshold", comp_table.get("highlight_threshold", 0.8))
        ),
        highlight_strength=float(
            apply_override("compositing", "highlight_strength", comp_table.get("highlight_strength", 0.15))
        ),
        light_color=np.asarray(
            comp_table.get("light_color", raw.get("light", {}).get("color", (1.0, 1.0, 1.0))), dtype=float
        ),
    )

    aug_table = raw.get("augment", {})
    augment = AugmentParams(
        hue_shift_max=float(apply_override("augment", "hue_shift_max", aug_table.get("hue_shift_max", 10.0))),
        exposure_stops_max=float(
            apply_override("augment", "exposure_stops_max", aug_table.get("exposure_stops_max", 0.5))
        ),
        noise_sigma_max=float(
            apply_override("augment", "noise_sigma_max", aug_table.get("noise_sigma_max", 0.02))
        ),
        seed=int(aug_table.get("seed", seed)),
    )

    phys_table = raw.get("physics", {})
    scene_table = raw.get("scene", {})
    physics = PhysicsConfig(
        dt=float(phys_table.get("dt", 1.0 / 120.0)),
        max_steps=int(phys_table.get("max_steps", 2400)),
        ke_threshold=float(phys_table.get("ke_threshold", 1e-5)),
        count_min=int(scene_table.get("count_min", 2)),
        count_max=int(scene_table.get("count_max", 6)),
    )

    label_table = raw.get("labels", {})
    labels = LabelConfig(
        simplify_epsilon=float(
            apply_override("labels", "simplify_epsilon", label_table.get("simplify_epsilon", 1.5))
        ),
        min_area_frac=float(apply_override("labels", "min_area_frac", label_table.get("min_area_frac", 1e-4))),
        self_check=bool(label_table.get("self_check", True)),
    )

    splits = raw.get("split", {})
    train_fraction = float(apply_override("split", "train", splits.get("train", 0.75)))
    val_fraction = float(apply_override("split", "val", splits.get("val", 1.0 - train_fraction)))

    paths = raw.get("paths", {})
    cache_dir = base / paths.get("cache_dir", "cache")
    output_dir = base / paths.get("output_dir", "dataset")

    return ProjectConfig(
        name=name,
        seed=seed,
        frame_count=frame_count,
        image_width=camera.width,
        image_height=camera.height,
        train_fraction=train_fraction,
        val_fraction=val_fraction,
        workspace_min=np.asarray(ws_min, dtype=float),
        workspace_max=np.asarray(ws_max, dtype=float),
        assets=tuple(assets),
        environment_splat=(base / env_splat) if env_splat else None,
        camera=camera,
        camera_path=_camera_path(cam_table),
        light_path=_light_path(raw.get("light", {})),
        composite=composite,
        augment=augment,
        physics=physics,
        labels=labels,
        background=np.asarray(raw.get("render", {}).get("background", (0.0, 0.0, 0.0)), dtype=float),
        sh_rotation=raw.get("render", {}).get("sh_rotation", "full"),
        cache_dir=cache_dir,
        output_dir=output_dir,
    )


def with_output_dir(config: ProjectConfig, output_dir: str | Path | None, cache_dir: str | Path | None = None) -> ProjectConfig:
    updates = {}
    if output_dir is not None:
        updates["output_dir"] = Path(output_dir)
    if cache_dir is not None:
        updates["cache_dir"] = Path(cache_dir)
    return replace(config, **updates) if updates else config
