"""Fixed-size two-view augmentation pipeline.

Replaces multi-resolution cropping with two same-size views per image:
random resized crop, color distortion (jitter + color dropping), and
Gaussian blur.  Images are float32 (C, H, W) arrays in [0, 1]; every random
draw comes from an explicit numpy Generator and is recorded in a trace, so
the whole pipeline is a pure function of (image, seed, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class AugmentConfig:
    out_size: int = 224
    scale_range: tuple[float, float] = (0.3, 0.9)
    aspect_range: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    gray_prob: float = 0.2
    blur_prob: float = 0.5
    sigma_range: tuple[float, float] = (0.1, 2.0)
    kernel_frac: float = 0.10

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"scale_range must satisfy 0 < lo <= hi <= 1, got {self.scale_range}")
        alo, ahi = self.aspect_range
        if not (alo <= 1.0 <= ahi):
            raise ConfigError(f"aspect_range must bracket 1, got {self.aspect_range}")
        for name in ("gray_prob", "blur_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        slo, shi = self.sigma_range
        if not (0.0 < slo <= shi):
            raise ConfigError(f"sigma_range must be positive, got {self.sigma_range}")
        if self.out_size < 1 or self.kernel_frac <= 0:
            raise ConfigError("out_size and kernel_frac must be positive")


@dataclass
class ViewPair:
    view1: np.ndarray
    view2: np.ndarray
    trace1: dict = field(default_factory=dict)
    trace2: dict = field(default_factory=dict)


def _check_image(image: np.ndarray):
    if image.ndim != 3:
        raise ValueError(f"expected (C, H, W) image, got shape {image.shape}")


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centered sampling; resizing to the
    input size is the identity."""
    _check_image(image)
    c, h, w = image.shape
    src = image.astype(np.float32, copy=False)

    def axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (pos - lo).astype(np.float32)
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    top = src[:, y0][:, :, x0] * (1 - fx) + src[:, y0][:, :, x1] * fx
    bot = src[:, y1][:, :, x0] * (1 - fx) + src[:, y1][:, :, x1] * fx
    return top * (1 - fy[None, :, None]) + bot * fy[None, :, None]


def random_resized_crop(image: np.ndarray, rng: np.random.Generator,
                        cfg: AugmentConfig, trace: dict | None = None) -> np.ndarray:
    """Crop a rectangle with area fraction in ``scale_range`` and aspect
    ratio in ``aspect_range``, then resize to ``out_size``.

    The trace records the sampled (pre-rounding) area fraction and aspect
    plus the integer rectangle.  Rejection-samples up to 10 times; center
    square as a flagged fallback, full-image resize for sub-2x2 inputs.
    """
    _check_image(image)
    _, h, w = image.shape
    if trace is None:
        trace = {}
    if h < 2 or w < 2:
        trace.update({"crop_fallback": "tiny_image", "crop_x": 0, "crop_y": 0,
                      "crop_h": h, "crop_w": w})
        return resize_bilinear(image, cfg.out_size, cfg.out_size)

    area = float(h * w)
    for _ in range(10):
        area_frac = float(rng.uniform(*cfg.scale_range))
        aspect = float(rng.uniform(*cfg.aspect_range))
        target = area_frac * area
        cw = int(round(np.sqrt(target * aspect)))
        ch = int(round(np.sqrt(target / aspect)))
        if 1 <= ch <= h and 1 <= cw <= w:
            y = int(rng.integers(0, h - ch + 1))
            x = int(rng.integers(0, w - cw + 1))
            trace.update({"crop_area_frac": area_frac, "crop_aspect": aspect,
                          "crop_x": x, "crop_y": y, "crop_h": ch, "crop_w": cw})
            crop = image[:, y:y + ch, x:x + cw]
            return resize_bilinear(crop, cfg.out_size, cfg.out_size)

    side = min(h, w)
    y, x = (h - side) // 2, (w - side) // 2
    trace.update({"crop_fallback": "center_square", "crop_x": x, "crop_y": y,
                  "crop_h": side, "crop_w": side})
    return resize_bilinear(image[:, y:y + side, x:x + side], cfg.out_size, cfg.out_size)


def _luma(image: np.ndarray) -> np.ndarray:
    if image.shape[0] == 3:
        return np.tensordot(LUMA_WEIGHTS.astype(np.float32), image, axes=([0], [0]))
    return image.mean(axis=0)


def _rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = rgb
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.maximum(maxc, 1e-12), 0.0)
    safe = np.where(span > 0, span, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    hue = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    hue = np.where(span > 0, (hue / 6.0) % 1.0, 0.0)
    return hue, s, v


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def color_distort(image: np.ndarray, rng: np.random.Generator,
                  cfg: AugmentConfig, trace: dict | None = None) -> np.ndarray:
    """Color jitter (brightness, contrast, saturation, hue, in that fixed
    order) followed by probabilistic color dropping to grayscale.

    Output is clamped to [0, 1] after every sub-operation.  Saturation and
    hue only touch 3-channel images; jitter factors of strength 0 skip the
    sub-operation entirely.
    """
    _check_image(image)
    if trace is None:
        trace = {}
    x = image.astype(np.float32, copy=True)

    if cfg.brightness > 0:
        fb = float(rng.uniform(max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness))
        trace["jitter_brightness"] = fb
        x = np.clip(x * fb, 0.0, 1.0)
    if cfg.contrast > 0:
        fc = float(rng.uniform(max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast))
        trace["jitter_contrast"] = fc
        mean = np.float32(_luma(x).mean())
        x = np.clip(mean + (x - mean) * fc, 0.0, 1.0)
    if cfg.saturation > 0 and x.shape[0] == 3:
        fs = float(rng.uniform(max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation))
        trace["jitter_saturation"] = fs
        gray = _luma(x)[None]
        x = np.clip(gray + (x - gray) * fs, 0.0, 1.0)
    if cfg.hue > 0 and x.shape[0] == 3:
        fh = float(rng.uniform(-cfg.hue, cfg.hue))
        trace["jitter_hue"] = fh
        hh, ss, vv = _rgb_to_hsv(x)
        x = np.clip(_hsv_to_rgb((hh + fh) % 1.0, ss, vv), 0.0, 1.0).astype(np.float32)

    if cfg.gray_prob > 0:
        dropped = bool(rng.random() < cfg.gray_prob)
        trace["color_dropped"] = dropped
        if dropped:
            x = np.repeat(_luma(x)[None], x.shape[0], axis=0)
    return np.clip(x, 0.0, 1.0).astype(np.float32)


def blur_kernel_size(side: int, kernel_frac: float) -> int:
    """Kernel side: the configured fraction of the shorter image side,
    rounded to the nearest odd integer (at least 1)."""
    target = kernel_frac * side
    k = 2 * int(round((target - 1.0) / 2.0)) + 1
    return max(k, 1)


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    center = (size - 1) / 2.0
    offsets = np.arange(size, dtype=np.float64) - center
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_separable(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size separable convolution with reflect padding."""
    k = kernel.shape[0]
    half = k // 2
    x = image.astype(np.float64)
    if half:
        x = np.pad(x, ((0, 0), (half, half), (0, 0)), mode="reflect")
    rows = sum(kernel[i] * x[:, i:i + image.shape[1], :] for i in range(k))
    if half:
        rows = np.pad(rows, ((0, 0), (0, 0), (half, half)), mode="reflect")
    cols = sum(kernel[i] * rows[:, :, i:i + image.shape[2]] for i in range(k))
    return cols.astype(np.float32)


def gaussian_blur(image: np.ndarray, rng: np.random.Generator,
                  cfg: AugmentConfig, trace: dict | None = None) -> np.ndarray:
    """With probability ``blur_prob``, convolve with a normalized Gaussian
    whose side is ``kernel_frac`` of the shorter image side (odd) and whose
    sigma is uniform over ``sigma_range``; otherwise identity."""
    _check_image(image)
    if trace is None:
        trace = {}
    applied = bool(rng.random() < cfg.blur_prob)
    trace["blur_applied"] = applied
    if not applied:
        return image.astype(np.float32, copy=False)
    sigma = float(rng.uniform(*cfg.sigma_range))
    size = blur_kernel_size(min(image.shape[1], image.shape[2]), cfg.kernel_frac)
    trace["blur_sigma"] = sigma
    trace["blur_kernel"] = size
    kernel = gaussian_kernel_1d(size, sigma)
    return np.clip(_convolve_separable(image, kernel), 0.0, 1.0)


def augment_view(image: np.ndarray, rng: np.random.Generator,
                 cfg: AugmentConfig) -> tuple[np.ndarray, dict]:
    """One full augmentation chain: crop -> color distortion -> blur."""
    trace: dict = {}
    x = random_resized_crop(image, rng, cfg, trace)
    x = color_distort(x, rng, cfg, trace)
    x = gaussian_blur(x, rng, cfg, trace)
    return x, trace


def make_view_pair(image: np.ndarray, rng: np.random.Generator,
                   cfg: AugmentConfig) -> ViewPair:
    """Two independently sampled chains over the same source image; both
    views come out at exactly ``out_size``."""
    rng1, rng2 = rng.spawn(2)
    view1, trace1 = augment_view(image, rng1, cfg)
    view2, trace2 = augment_view(image, rng2, cfg)
    return ViewPair(view1, view2, trace1, trace2)


def view_rng(global_seed: int, image_index: int, epoch: int) -> np.random.Generator:
    """Per-sample stream: a pure function of (seed, image index, epoch) so
    parallel loaders reproduce the single-worker sequence."""
    return np.random.default_rng(np.random.SeedSequence((global_seed, epoch, image_index)))
