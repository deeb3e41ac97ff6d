"""Command-line entry points for the dataset pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure
(over the frame-failure tripwire).
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .config import ConfigError, load_config, with_output_dir
from .evaluation import evaluate, load_yolo_directory
from .pipeline import (
    GenerationError,
    generate_dataset,
    prepare_assets,
    preview_frame,
    validate_dataset,
)
from .toy_assets import make_toy_assets

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

WORKERS_ENV = "SPLATGEN_WORKERS"


def _workers(option_value: int | None) -> int:
    if option_value is not None:
        return max(1, option_value)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise click.UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return 1


def _load(config_path: str, out: str | None, cache: str | None, overrides: dict | None = None):
    config = load_config(config_path, overrides)
    return with_output_dir(config, out, cache)


@click.group()
def cli() -> None:
    """Generate labeled detection/segmentation datasets from splat assets."""


@cli.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--cache", type=click.Path(file_okay=False), default=None, help="Cache directory override.")
@click.option("--force", is_flag=True, help="Recompute even when the cache is fresh.")
def prepare(config_path: str, cache: str | None, force: bool) -> None:
    """Strip backgrounds and align meshes for every configured asset."""
    config = _load(config_path, None, cache)
    assets, environment, errors = prepare_assets(config, force=force)
    for asset in assets:
        click.echo(f"prepared {asset.name}: {asset.splat.count} splats, {asset.mesh.num_triangles} triangles")
    if environment is not None:
        click.echo(f"environment splat: {environment.count} splats")
    if errors:
        for err in errors:
            click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_DATA)


def _composite_overrides(blur_sigma, sigmoid_k, sigmoid_c, shadow_floor,
                         highlight_threshold, highlight_strength,
                         hue_shift_max, exposure_stops_max, noise_sigma_max,
                         simplify_epsilon, min_area_frac) -> dict:
    pairs = {
        "compositing.blur_sigma": blur_sigma,
        "compositing.sigmoid_k": sigmoid_k,
        "compositing.sigmoid_c": sigmoid_c,
        "compositing.shadow_floor": shadow_floor,
        "compositing.highlight_threshold": highlight_threshold,
        "compositing.highlight_strength": highlight_strength,
        "augment.hue_shift_max": hue_shift_max,
        "augment.exposure_stops_max": exposure_stops_max,
        "augment.noise_sigma_max": noise_sigma_max,
        "labels.simplify_epsilon": simplify_epsilon,
        "labels.min_area_frac": min_area_frac,
    }
    return {k: v for k, v in pairs.items() if v is not None}


_COMPOSITE_FLAGS = [
    click.option("--blur-sigma", type=float, default=None),
    click.option("--sigmoid-k", type=float, default=None),
    click.option("--sigmoid-c", type=float, default=None),
    click.option("--shadow-floor", type=float, default=None),
    click.option("--highlight-threshold", type=float, default=None),
    click.option("--highlight-strength", type=float, default=None),
    click.option("--hue-shift-max", type=float, default=None),
    click.option("--exposure-stops-max", type=float, default=None),
    click.option("--noise-sigma-max", type=float, default=None),
    click.option("--simplify-epsilon", type=float, default=None),
    click.option("--min-area-frac", type=float, default=None),
]


def _with_composite_flags(fn):
    for flag in reversed(_COMPOSITE_FLAGS):
        fn = flag(fn)
    return fn


@cli.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Dataset output directory.")
@click.option("--cache", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=None, help=f"Worker count (or set {WORKERS_ENV}).")
@click.option("--seed", type=int, default=None, help="Master seed override.")
@click.option("--frames", type=int, default=None, help="Frame count override.")
@_with_composite_flags
def generate(config_path: str, out: str | None, cache: str | None, workers: int | None,
             seed: int | None, frames: int | None, **flags) -> None:
    """Generate the full dataset from a project config."""
    overrides = _composite_overrides(**flags)
    if seed is not None:
        overrides["project.seed"] = seed
    if frames is not None:
        overrides["project.frame_count"] = frames
    config = _load(config_path, out, cache, overrides)
    assets, environment, errors = prepare_assets(config)
    if errors:
        for err in errors:
            click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_DATA)
    frame_total = config.frame_count

    done = {"n": 0}

    def progress() -> None:
        done["n"] += 1
        click.echo(f"\rframes: {done['n']}/{frame_total}", nl=False)

    try:
        manifest = generate_dataset(config, assets, environment, workers=_workers(workers), progress=progress)
    except GenerationError as exc:
        click.echo(f"\nerror: {exc}", err=True)
        sys.exit(EXIT_PARTIAL)
    click.echo("")
    ok = len(manifest["records"])
    failed = len(manifest["failures"])
    click.echo(f"wrote {ok} frames to {config.output_dir}" + (f" ({failed} failed)" if failed else ""))


@cli.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("frame_index", type=int)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Preview output directory.")
@click.option("--cache", type=click.Path(file_okay=False), default=None)
@click.option("--raw", is_flag=True, help="Also dump grayscale passes in the raw float format.")
@_with_composite_flags
def preview(config_path: str, frame_index: int, out: str | None, cache: str | None, raw: bool, **flags) -> None:
    """Render one frame's intermediate passes for inspection."""
    config = _load(config_path, None, cache, _composite_overrides(**flags))
    out_dir = Path(out) if out else config.output_dir / "preview"
    assets, environment, errors = prepare_assets(config)
    if errors:
        for err in errors:
            click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_DATA)
    try:
        written = preview_frame(config, assets, environment, frame_index, out_dir, raw=raw)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    for path in written:
        click.echo(str(path))


@cli.command("eval")
@click.argument("gt_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("pred_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--sizes", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file mapping image stems to [width, height].")
@click.option("--image-size", type=str, default=None, help="Uniform WxH for all images, e.g. 640x480.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Report output directory.")
def eval_cmd(gt_dir: str, pred_dir: str, sizes: str | None, image_size: str | None, out: str | None) -> None:
    """Evaluate predictions against ground truth (both YOLO label dirs)."""
    gt_path = Path(gt_dir)
    stems = sorted(p.stem for p in gt_path.glob("*.txt"))
    if not stems:
        click.echo("error: ground-truth directory has no .txt label files", err=True)
        sys.exit(EXIT_DATA)
    if sizes:
        table = json.loads(Path(sizes).read_text(encoding="utf-8"))
        image_sizes = {k: (int(v[0]), int(v[1])) for k, v in table.items()}
    elif image_size:
        try:
            w, h = (int(v) for v in image_size.lower().split("x"))
        except ValueError:
            raise click.UsageError("--image-size must look like 640x480")
        image_sizes = {stem: (w, h) for stem in stems}
    else:
        sizes_file = gt_path / "sizes.json"
        if not sizes_file.exists():
            raise click.UsageError("need --sizes, --image-size, or a sizes.json next to the labels")
        table = json.loads(sizes_file.read_text(encoding="utf-8"))
        image_sizes = {k: (int(v[0]), int(v[1])) for k, v in table.items()}
    pred_stems = {p.stem for p in Path(pred_dir).glob("*.txt")}
    for stem in pred_stems - set(stems):
        image_sizes.setdefault(stem, next(iter(image_sizes.values())))
    try:
        gts = load_yolo_directory(gt_dir, image_sizes, with_confidence=False)
        dets = load_yolo_directory(pred_dir, image_sizes, with_confidence=True)
        report = evaluate(dets, gts, image_sizes)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    click.echo(report.to_text(), nl=False)
    if out:
        out_path = Path(out)
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "report.txt").write_text(report.to_text(), encoding="utf-8")
        (out_path / "report.json").write_text(report.to_json(), encoding="utf-8")
        click.echo(f"reports written to {out_path}")


@cli.command("make-toy-assets")
@click.argument("out_dir", type=click.Path(file_okay=False))
def make_toy_assets_cmd(out_dir: str) -> None:
    """Write the procedural toy asset bundle (splats, meshes, config)."""
    files = make_toy_assets(out_dir)
    for name, path in sorted(files.items()):
        click.echo(f"{name}: {path}")


@cli.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--classes", type=int, default=None, help="Expected class count.")
def validate(dataset_dir: str, classes: int | None) -> None:
    """Structurally validate a generated dataset."""
    problems = validate_dataset(dataset_dir, class_count=classes)
    if problems:
        for p in problems:
            click.echo(f"problem: {p}", err=True)
        sys.exit(EXIT_DATA)
    click.echo("dataset ok")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_DATA)


if __name__ == "__main__":
    main()
