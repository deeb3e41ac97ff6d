"""splatgen: batch generation of labeled detection/segmentation datasets
from pre-reconstructed Gaussian-splat and proxy-mesh assets.

The pipeline renders a photorealistic splat appearance pass, a mesh-based
shadow pass, and an instance-ID map per frame; composites them with
processed shadows, highlights, and augmentation; and emits YOLO-format
segmentation labels plus evaluation tooling.
"""

from .cameras import (
    LightRig,
    MotionPath,
    PinholeCamera,
    Pose,
    frame_time,
    look_at_pose,
    project_point,
    sample_path,
)
from .compose import (
    AugmentParams,
    CompositeParams,
    apply_highlights,
    apply_shadows,
    augment,
    composite_frame,
    gaussian_blur,
    normalize_map,
    shift_hue,
    sigmoid_remap,
)
from .evaluation import (
    Detection,
    EvalReport,
    GroundTruth,
    average_precision,
    evaluate,
    iou_box,
    iou_mask,
    match_predictions,
)
from .geometry import SimilarityTransform, invert_similarity
from .labeling import (
    InstanceLabel,
    YoloLine,
    bbox_from_polygons,
    extract_components,
    filter_fragments,
    labels_from_id_map,
    polygon_mask,
    simplify_polygon,
    to_yolo_lines,
    trace_contour,
)
from .mesh_render import rasterize_depth, render_id_map, render_shadow_pass
from .meshes import TriMesh, align_mesh_to_splat, box_mesh, load_obj, save_obj, uv_sphere_mesh
from .physics import (
    RigidBody,
    SettleResult,
    SpawnAsset,
    StaticCollider,
    WorldState,
    build_enclosure,
    settle,
    spawn_objects,
    step,
    sync_splat_to_mesh,
)
from .raster import covariance_3d, project_gaussian, render_appearance
from .sh import eval_sh
from .splats import (
    Gaussian3D,
    MaskedView,
    SplatCloud,
    load_splat_ply,
    save_splat_ply,
    strip_background,
    transform_cloud,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentParams",
    "CompositeParams",
    "Detection",
    "EvalReport",
    "Gaussian3D",
    "GroundTruth",
    "InstanceLabel",
    "LightRig",
    "MaskedView",
    "MotionPath",
    "PinholeCamera",
    "Pose",
    "RigidBody",
    "SettleResult",
    "SimilarityTransform",
    "SpawnAsset",
    "SplatCloud",
    "StaticCollider",
    "TriMesh",
    "WorldState",
    "YoloLine",
    "align_mesh_to_splat",
    "apply_highlights",
    "apply_shadows",
    "augment",
    "average_precision",
    "bbox_from_polygons",
    "box_mesh",
    "build_enclosure",
    "composite_frame",
    "covariance_3d",
    "eval_sh",
    "evaluate",
    "extract_components",
    "filter_fragments",
    "frame_time",
    "gaussian_blur",
    "invert_similarity",
    "iou_box",
    "iou_mask",
    "labels_from_id_map",
    "load_obj",
    "load_splat_ply",
    "look_at_pose",
    "match_predictions",
    "normalize_map",
    "polygon_mask",
    "project_gaussian",
    "project_point",
    "rasterize_depth",
    "render_appearance",
    "render_id_map",
    "render_shadow_pass",
    "sample_path",
    "save_obj",
    "save_splat_ply",
    "settle",
    "shift_hue",
    "sigmoid_remap",
    "simplify_polygon",
    "spawn_objects",
    "step",
    "strip_background",
    "sync_splat_to_mesh",
    "to_yolo_lines",
    "trace_contour",
    "transform_cloud",
    "uv_sphere_mesh",
]
