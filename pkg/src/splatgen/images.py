"""Image buffer conventions and file I/O.

Buffers are plain numpy arrays:

- RGB images: ``(H, W, 3)`` float64 in [0, 1]
- grayscale maps (shadow/illumination): ``(H, W)`` float64 in [0, 1]
- depth buffers: ``(H, W)`` float64, ``+inf`` where empty
- instance-ID maps: ``(H, W)`` int32, 0 = background

PNG files are 8-bit with round-half-up quantization. The raw float dump
format used by tests and debugging is: magic ``SPLATIMG1``, then u32
width, u32 height, u32 channels (little endian), then float32 planes,
channel-major, each row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

RAW_MAGIC = b"SPLATIMG1"

MASK_THRESHOLD = 128


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize [0,1] floats to u8 with round-half-up after clamping."""
    clipped = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Write an RGB (H,W,3) or grayscale (H,W) float image as 8-bit PNG."""
    arr = to_uint8(img)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode).save(str(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG back to floats in [0,1]; RGB -> (H,W,3), grayscale -> (H,W)."""
    with Image.open(str(path)) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=float)
            return arr / 255.0
        arr = np.asarray(im.convert("RGB"), dtype=float)
        return arr / 255.0


def load_mask_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PNG as a binary mask (value >= 128 is object)."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= MASK_THRESHOLD


def save_raw(path: str | Path, img: np.ndarray) -> None:
    """Dump a float buffer in the SPLATIMG1 raw format."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected (H,W) or (H,W,C) array, got shape {arr.shape}")
    h, w, c = arr.shape
    planes = np.ascontiguousarray(np.moveaxis(arr, 2, 0))
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(planes.astype("<f4").tobytes())


def load_raw(path: str | Path) -> np.ndarray:
    """Read a SPLATIMG1 dump; returns (H,W) for 1 channel else (H,W,C) float64."""
    with open(path, "rb") as f:
        magic = f.read(len(RAW_MAGIC))
        if magic != RAW_MAGIC:
            raise ValueError(f"{path}: not a SPLATIMG1 file")
        w, h, c = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(4 * w * h * c), dtype="<f4")
    if data.size != w * h * c:
        raise ValueError(f"{path}: truncated raw image data")
    planes = data.reshape(c, h, w).astype(float)
    return planes[0] if c == 1 else np.moveaxis(planes, 0, 2)


def id_map_to_rgb(ids: np.ndarray) -> np.ndarray:
    """Colorize an instance-ID map for previews (background black)."""
    ids = np.asarray(ids)
    # deterministic distinct hues per id via a fixed multiplicative hash
    h, w = ids.shape
    rgb = np.zeros((h, w, 3))
    for instance_id in np.unique(ids):
        if instance_id == 0:
            continue
        x = (int(instance_id) * 2654435761) & 0xFFFFFFFF
        color = np.array([(x >> 16) & 0xFF, (x >> 8) & 0xFF, x & 0xFF], dtype=float)
        color = 0.25 + 0.75 * color / 255.0
        rgb[ids == instance_id] = color
    return rgb
