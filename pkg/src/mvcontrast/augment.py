"""Stochastic image augmentation for training views.

Every call to apply() consumes exactly eight rng draws (crop fraction,
crop x, crop y, flip, brightness, contrast, saturation, grayscale)
regardless of configuration, so downstream draw sequences never shift
when a strength is changed.  Operations whose drawn parameter is the
identity are skipped outright, which keeps them bit-exact rather than
merely close.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import Rng


@dataclass(frozen=True)
class AugmentConfig:
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    grayscale_prob: float = 0.2
    crop_scale: tuple = (0.5, 1.0)
    flip_prob: float = 0.5
    out_hw: tuple = (32, 32)

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} strength must be in [0, 1], got {v}")
        for name in ("grayscale_prob", "flip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.crop_scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"crop_scale must satisfy 0 < min <= max <= 1, got {self.crop_scale}")
        h, w = self.out_hw
        if h < 1 or w < 1:
            raise ConfigError(f"output size must be positive, got {self.out_hw}")


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) image, got shape {image.shape}")
    return image


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample with half-pixel-aligned centers.

    Source coordinate for output index j is (j + 0.5) * in/out - 0.5,
    clamped to the valid range.  Interpolation uses a + t * (b - a), so
    constant images and size-preserving resizes are reproduced exactly.
    """
    image = _check_image(image)
    _, in_h, in_w = image.shape

    def grid(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    x0, x1, tx = grid(in_w, out_w)
    y0, y1, ty = grid(in_h, out_h)
    rows = image[:, :, x0] + tx * (image[:, :, x1] - image[:, :, x0])
    out = rows[:, y0, :] + ty[:, None] * (rows[:, y1, :] - rows[:, y0, :])
    return out


def _center_square(image: np.ndarray):
    """Largest inscribed square, floor-centered; identity on square input."""
    _, h, w = image.shape
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    return image[:, y0 : y0 + side, x0 : x0 + side]


def _gray(image: np.ndarray) -> np.ndarray:
    # dyadic weights keep r == g == b inputs bit-identical
    r, g, b = image
    return (0.25 * r + 0.25 * b) + 0.5 * g


def eval_transform(image: np.ndarray, out_hw) -> np.ndarray:
    """Deterministic center-square crop and resize; no randomness."""
    image = _check_image(image)
    out_h, out_w = out_hw
    return resize_bilinear(_center_square(image), out_h, out_w)


def apply(image: np.ndarray, config: AugmentConfig, rng: Rng) -> np.ndarray:
    """Crop, then flip, then color jitter, then grayscale; clamp to [0, 1]."""
    image = _check_image(image)
    out_h, out_w = config.out_hw

    # random area-fraction crop inside the center square
    square = _center_square(image)
    side0 = square.shape[1]
    frac = rng.uniform_in(config.crop_scale[0], config.crop_scale[1])
    side = int(round(side0 * math.sqrt(frac)))
    if round(side0 * math.sqrt(config.crop_scale[0])) < 1:
        raise ConfigError(
            f"crop window degenerate: scale {config.crop_scale[0]} of a "
            f"{side0}px square is under one pixel"
        )
    ux, uy = rng.uniform(), rng.uniform()
    x = int(round(ux * (side0 - side)))
    y = int(round(uy * (side0 - side)))
    out = resize_bilinear(square[:, y : y + side, x : x + side], out_h, out_w)

    if rng.uniform() < config.flip_prob:
        out = out[:, :, ::-1]

    # jitter factors drawn unconditionally; zero-strength ops are skipped
    fb = 1.0 + config.brightness * (2.0 * rng.uniform() - 1.0)
    fc = 1.0 + config.contrast * (2.0 * rng.uniform() - 1.0)
    fs = 1.0 + config.saturation * (2.0 * rng.uniform() - 1.0)
    if config.brightness > 0.0:
        out = out * fb
    if config.contrast > 0.0:
        m = float(np.mean(_gray(out)))
        out = m + (out - m) * fc
    if config.saturation > 0.0:
        gray = _gray(out)
        out = gray + (out - gray) * fs

    if rng.uniform() < config.grayscale_prob:
        out = np.broadcast_to(_gray(out), (3, out_h, out_w))

    return np.clip(out, 0.0, 1.0)
