"""Shadow processing and final frame composition.

The fixed stage order mirrors the hybrid render chain: the raw illumination
pass is normalized, blurred, remapped through an endpoint-rescaled sigmoid,
applied multiplicatively (with a darkness floor), used once more as an
additive highlight mask, and the result is randomly augmented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d


@dataclass(frozen=True)
class CompositeParams:
    blur_sigma: float = 5.0
    sigmoid_k: float = 10.0
    sigmoid_c: float = 0.5
    shadow_floor: float = 0.4
    highlight_threshold: float = 0.8
    highlight_strength: float = 0.15
    light_color: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")
        if not (0.0 <= self.shadow_floor <= 1.0):
            raise ValueError("shadow_floor must be in [0, 1]")
        if not (0.0 <= self.highlight_threshold < 1.0):
            raise ValueError("highlight_threshold must be in [0, 1)")
        color = np.ones(3) if self.light_color is None else np.asarray(self.light_color, dtype=float)
        object.__setattr__(self, "light_color", color.reshape(3))


@dataclass(frozen=True)
class AugmentParams:
    hue_shift_max: float = 10.0      # degrees
    exposure_stops_max: float = 0.5  # powers of two
    noise_sigma_max: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.hue_shift_max, self.exposure_stops_max, self.noise_sigma_max) < 0:
            raise ValueError("augmentation maxima must be >= 0")


def normalize_map(s: np.ndarray) -> np.ndarray:
    """Affine-stretch a grayscale map to span [0, 1]; flat maps become all-ones."""
    s = np.asarray(s, dtype=float)
    lo = float(s.min())
    hi = float(s.max())
    if hi - lo < 1e-9:
        return np.ones_like(s)
    return (s - lo) / (hi - lo)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(s: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ceil(3 sigma), clamp-to-edge borders."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    s = np.asarray(s, dtype=float)
    if sigma == 0.0:
        return s.copy()
    k = _gaussian_kernel(sigma)
    out = convolve1d(s, k, axis=1, mode="nearest")
    return convolve1d(out, k, axis=0, mode="nearest")


def sigmoid_remap(s: np.ndarray, k: float = 10.0, c: float = 0.5) -> np.ndarray:
    """Logistic contrast curve rescaled so 0 maps to 0 and 1 maps to 1."""
    if k <= 0:
        raise ValueError("sigmoid slope must be > 0")
    s = np.asarray(s, dtype=float)
    lo = _logistic_scalar(-k * c)
    hi = _logistic_scalar(k * (1.0 - c))
    return (_logistic(k * (s - c)) - lo) / (hi - lo)


def _logistic(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logistic_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    ex = np.exp(x)
    return ex / (1.0 + ex)


def apply_shadows(rgb: np.ndarray, s: np.ndarray, shadow_floor: float = 0.4) -> np.ndarray:
    """Darken the image by the shadow map, never below the floor fraction."""
    rgb = np.asarray(rgb, dtype=float)
    s = np.asarray(s, dtype=float)
    if rgb.shape[:2] != s.shape:
        raise ValueError(f"image {rgb.shape[:2]} and shadow map {s.shape} sizes differ")
    factor = shadow_floor + (1.0 - shadow_floor) * s
    return np.clip(rgb * factor[:, :, None], 0.0, 1.0)


def apply_highlights(
    rgb: np.ndarray,
    s: np.ndarray,
    threshold: float = 0.8,
    strength: float = 0.15,
    light_color: np.ndarray = (1.0, 1.0, 1.0),
) -> np.ndarray:
    """Additively blend a thresholded ramp of the shadow map as highlights."""
    rgb = np.asarray(rgb, dtype=float)
    s = np.asarray(s, dtype=float)
    if rgb.shape[:2] != s.shape:
        raise ValueError(f"image {rgb.shape[:2]} and shadow map {s.shape} sizes differ")
    if not threshold < 1.0:
        raise ValueError("highlight threshold must be < 1")
    light_color = np.asarray(light_color, dtype=float).reshape(3)
    mask = np.maximum(0.0, s - threshold) / (1.0 - threshold)
    return np.clip(rgb + strength * mask[:, :, None] * light_color[None, None, :], 0.0, 1.0)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized exact RGB -> HSV on (..., 3) arrays; H in [0, 1)."""
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    dz = np.where(delta == 0, 1.0, delta)
    hue = np.zeros_like(maxc)
    is_r = (maxc == r) & (delta > 0)
    is_g = (maxc == g) & (delta > 0) & ~is_r
    is_b = (delta > 0) & ~is_r & ~is_g
    hue = np.where(is_r, ((g - b) / dz) % 6.0, hue)
    hue = np.where(is_g, (b - r) / dz + 2.0, hue)
    hue = np.where(is_b, (r - g) / dz + 4.0, hue)
    return np.stack([hue / 6.0, sat, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorized exact HSV -> RGB inverse of :func:`rgb_to_hsv`."""
    hsv = np.asarray(hsv, dtype=float)
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    h6 = h * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def shift_hue(rgb: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate image hue by the given angle via exact HSV round-trip."""
    hsv = rgb_to_hsv(np.asarray(rgb, dtype=float))
    hsv[..., 0] = (hsv[..., 0] + degrees / 360.0) % 1.0
    return hsv_to_rgb(hsv)


def _effect_rng(params: AugmentParams, frame_index: int, stream: int) -> np.random.Generator:
    # one stream per effect: toggling an effect never perturbs the others
    return np.random.default_rng(np.random.SeedSequence((params.seed, frame_index, stream)))


def augment(rgb: np.ndarray, params: AugmentParams, frame_index: int) -> np.ndarray:
    """Randomized hue/exposure/noise perturbation, deterministic per
    (seed, frame_index)."""
    out = np.asarray(rgb, dtype=float)
    if params.hue_shift_max > 0:
        degrees = _effect_rng(params, frame_index, 0).uniform(-params.hue_shift_max, params.hue_shift_max)
        out = shift_hue(out, degrees)
    if params.exposure_stops_max > 0:
        stops = _effect_rng(params, frame_index, 1).uniform(-params.exposure_stops_max, params.exposure_stops_max)
        out = out * (2.0 ** stops)
    if params.noise_sigma_max > 0:
        rng = _effect_rng(params, frame_index, 2)
        sigma = rng.uniform(0.0, params.noise_sigma_max)
        out = out + rng.normal(0.0, 1.0, size=out.shape) * sigma
    return np.clip(out, 0.0, 1.0)


def process_shadow_map(shadow_raw: np.ndarray, cp: CompositeParams) -> np.ndarray:
    """Shadow-side half of the chain: normalize -> blur -> sigmoid."""
    s = normalize_map(shadow_raw)
    s = gaussian_blur(s, cp.blur_sigma)
    return sigmoid_remap(s, cp.sigmoid_k, cp.sigmoid_c)


def composite_frame(
    appearance: np.ndarray,
    shadow_raw: np.ndarray,
    cp: CompositeParams,
    ap: AugmentParams,
    frame_index: int,
) -> np.ndarray:
    """Full fixed-order composition of one frame."""
    s = process_shadow_map(shadow_raw, cp)
    out = apply_shadows(appearance, s, cp.shadow_floor)
    out = apply_highlights(out, s, cp.highlight_threshold, cp.highlight_strength, cp.light_color)
    return augment(out, ap, frame_index)
