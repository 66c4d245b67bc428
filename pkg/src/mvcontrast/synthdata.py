"""Procedural multi-view dataset generator.

Objects are 2D part compositions (12 archetypes, one per class) drawn
with per-instance colors, aspect, and part scales, then rasterized
under in-plane rotation.  Out-of-plane rotation axes are approximated
by a fixed 0.75 foreshortening of the perpendicular screen axis, which
keeps every view non-degenerate while still producing large view
variation.  An optional occluder band stands in for the hand holding
the object.

Everything is a pure function of (config, seed): instance parameters
come from a per-object stream, per-video draws (start phase, occluder
phase, hodgepodge angles) from a per-video stream.
"""

import colorsys
from dataclasses import dataclass, asdict
import json
import math
from pathlib import Path

import numpy as np

from .dataio import (
    ROTATION_KINDS,
    FrameRecord,
    Manifest,
    write_image_ppm,
    write_manifest,
)
from .errors import ConfigError
from .rng import Rng, derive_seed

TRANSFER_STYLES = ("recolor", "background", "blur")

_TILT_SQUASH = 0.75
_HALF_EXTENT = 0.38  # object-frame unit length as a fraction of image size
_HAND_RGB = (0.87, 0.66, 0.50)
_OCCLUDER_BUDGET = 0.30

# part := (kind, cx, cy, a, b, color index); painted in order, later on top
_ARCHETYPES = (
    (("disk", 0.0, 0.0, 0.72, 0.0, 0), ("ring", 0.78, 0.0, 0.30, 0.16, 1), ("disk", 0.0, 0.0, 0.36, 0.0, 2)),
    (("ring", 0.0, 0.0, 0.95, 0.62, 0), ("disk", 0.0, 0.0, 0.50, 0.0, 1), ("rect", 0.0, 0.0, 0.08, 0.92, 2)),
    (("rect", 0.0, -0.10, 0.85, 0.38, 0), ("rect", 0.45, -0.52, 0.34, 0.22, 1), ("disk", -0.45, 0.42, 0.26, 0.0, 2), ("disk", 0.45, 0.42, 0.26, 0.0, 2)),
    (("rect", 0.0, 0.15, 0.28, 0.60, 0), ("tri", 0.0, -0.55, 0.40, 0.30, 1), ("tri", -0.38, 0.62, 0.22, 0.20, 2), ("tri", 0.38, 0.62, 0.22, 0.20, 2)),
    (("rect", 0.0, 0.0, 0.55, 0.14, 0), ("disk", -0.62, 0.0, 0.33, 0.0, 1), ("disk", 0.62, 0.0, 0.33, 0.0, 1), ("disk", 0.0, 0.0, 0.18, 0.0, 2)),
    (("rect", 0.0, 0.30, 0.60, 0.50, 0), ("tri", 0.0, -0.45, 0.75, 0.32, 1), ("rect", 0.0, 0.52, 0.16, 0.28, 2)),
    (("disk", 0.0, -0.60, 0.30, 0.0, 1), ("disk", 0.0, 0.60, 0.30, 0.0, 1), ("disk", -0.60, 0.0, 0.30, 0.0, 1), ("disk", 0.60, 0.0, 0.30, 0.0, 1), ("disk", 0.0, 0.0, 0.38, 0.0, 0), ("disk", 0.0, 0.0, 0.16, 0.0, 2)),
    (("vee", 0.0, -0.40, 0.62, 0.40, 0), ("tri", 0.0, 0.40, 0.62, 0.40, 1), ("rect", 0.0, 0.0, 0.30, 0.07, 2)),
    (("rect", -0.40, 0.0, 0.10, 0.90, 0), ("rect", 0.40, 0.0, 0.10, 0.90, 0), ("rect", 0.0, -0.50, 0.40, 0.08, 1), ("rect", 0.0, 0.0, 0.40, 0.08, 1), ("rect", 0.0, 0.50, 0.40, 0.08, 2)),
    (("disk", 0.0, 0.0, 0.90, 0.0, 0), ("disk", 0.0, 0.0, 0.60, 0.0, 1), ("disk", 0.0, 0.0, 0.30, 0.0, 2)),
    (("rect", -0.25, 0.0, 0.50, 0.15, 0), ("wedge", 0.45, 0.0, 0.40, 0.45, 1), ("rect", -0.70, 0.0, 0.08, 0.30, 2)),
    (("disk", 0.0, 0.50, 0.42, 0.0, 0), ("disk", 0.0, -0.05, 0.32, 0.0, 1), ("disk", 0.0, -0.52, 0.24, 0.0, 2)),
)

MAX_CLASSES = len(_ARCHETYPES)


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 8
    objects_per_class: int = 8
    rotations_per_object: int = 2
    fps: float = 3.0
    duration: float = 10.0
    revolutions: float = 2.0
    image_size: int = 32
    occluder: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_classes <= MAX_CLASSES:
            raise ConfigError(f"num_classes must be in [2, {MAX_CLASSES}], got {self.num_classes}")
        if self.objects_per_class < 2:
            raise ConfigError(f"objects_per_class must be >= 2, got {self.objects_per_class}")
        if not 1 <= self.rotations_per_object <= len(ROTATION_KINDS):
            raise ConfigError(
                f"rotations_per_object must be in [1, {len(ROTATION_KINDS)}], got {self.rotations_per_object}"
            )
        if self.fps <= 0 or self.duration <= 0 or self.revolutions <= 0:
            raise ConfigError("fps, duration, and revolutions must be positive")
        n = self.fps * self.duration
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise ConfigError(f"fps * duration must be an integer >= 2, got {n}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8, got {self.image_size}")

    @property
    def frames_per_video(self) -> int:
        return int(round(self.fps * self.duration))

    @property
    def degrees_per_second(self) -> float:
        return self.revolutions * 360.0 / self.duration

    @property
    def video_kinds(self) -> tuple:
        return ROTATION_KINDS[: self.rotations_per_object] + ("hodgepodge",)

    @property
    def num_sequences(self) -> int:
        return self.num_classes * self.objects_per_class * (self.rotations_per_object + 1)


@dataclass(frozen=True)
class ObjectRecipe:
    class_id: int
    object_id: int
    parts: tuple  # archetype parts, (kind, cx, cy, a, b, color index)
    part_scales: tuple
    palette: tuple  # three part colors, rgb
    background: tuple  # rgb
    background2: tuple  # rgb; equals background for plain renders
    bg_pattern: str  # "plain" or "stripes"
    aspect: tuple  # (ax, ay)
    scale: float
    blur: float  # 0 disables


def _hsv(h, s, v):
    return colorsys.hsv_to_rgb(h % 1.0, s, v)


def make_recipe(seed: int, class_id: int, object_id: int, style=None, strength: float = 0.5) -> ObjectRecipe:
    """Instance parameters from a per-object stream; fixed draw order."""
    if style is not None and style not in TRANSFER_STYLES:
        raise ConfigError(f"unknown transfer style {style!r}")
    rng = Rng(derive_seed(seed, "object", class_id, object_id))
    ax = rng.uniform_in(0.82, 1.22)
    ay = rng.uniform_in(0.82, 1.22)
    scale = rng.uniform_in(0.80, 1.05)
    hues = [rng.uniform() for _ in range(3)]
    sat = rng.uniform_in(0.55, 0.95)
    val = rng.uniform_in(0.50, 0.85)
    bg_hue = rng.uniform()
    bg_val = rng.uniform_in(0.85, 0.95)
    parts = _ARCHETYPES[class_id % MAX_CLASSES]
    part_scales = tuple(rng.uniform_in(0.90, 1.12) for _ in parts)

    hue_shift = 0.35 * strength if style == "recolor" else 0.0
    palette = tuple(_hsv(h + hue_shift, sat, val) for h in hues)
    background = _hsv(bg_hue + hue_shift, 0.08, bg_val)
    if style == "background":
        tint = _hsv(bg_hue + 0.5, 0.45, bg_val * 0.8)
        background2 = tuple((1.0 - strength) * a + strength * b for a, b in zip(background, tint))
        pattern = "stripes"
    else:
        background2 = background
        pattern = "plain"
    blur = strength if style == "blur" else 0.0
    return ObjectRecipe(
        class_id=class_id,
        object_id=object_id,
        parts=parts,
        part_scales=part_scales,
        palette=palette,
        background=background,
        background2=background2,
        bg_pattern=pattern,
        aspect=(ax, ay),
        scale=scale,
        blur=blur,
    )


def _part_mask(kind, lx, ly, a, b):
    if kind == "disk":
        return lx * lx + ly * ly <= a * a
    if kind == "ring":
        d2 = lx * lx + ly * ly
        return (d2 <= a * a) & (d2 >= b * b)
    if kind == "rect":
        return (np.abs(lx) <= a) & (np.abs(ly) <= b)
    if kind == "tri":  # apex up at cy - b, base at cy + b
        return (np.abs(ly) <= b) & (np.abs(lx) <= a * (ly + b) / (2.0 * b))
    if kind == "vee":  # apex down at cy + b
        return (np.abs(ly) <= b) & (np.abs(lx) <= a * (b - ly) / (2.0 * b))
    if kind == "wedge":  # apex right at cx + a
        return (np.abs(lx) <= a) & (np.abs(ly) <= b * (a - lx) / (2.0 * a))
    raise ConfigError(f"unknown part kind {kind!r}")


def _box_blur3(image: np.ndarray) -> np.ndarray:
    padded = np.pad(image, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.zeros_like(image)
    for dy in range(3):
        for dx in range(3):
            out += padded[:, dy : dy + image.shape[1], dx : dx + image.shape[2]]
    return out / 9.0


def render_frame(recipe: ObjectRecipe, angle: float, occluder_phase, image_size: int, tilt_axis=None):
    """Rasterize one view; returns (image (3,S,S) in [0,1], tight bbox).

    The bbox bounds the object's own pixels before any occluder is
    painted, the way an annotator would box a partly hidden object.
    2x supersampling gives fractional edge coverage.
    """
    s = image_size
    theta = math.radians(angle % 360.0)  # wrap first so 0 and 360 match bitwise
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    # supersampled screen coords in object-frame units
    centers = (np.arange(2 * s) + 0.5) / 2.0
    px, py = np.meshgrid(centers, centers)
    sx = (px - s / 2.0) / (_HALF_EXTENT * s)
    sy = (py - s / 2.0) / (_HALF_EXTENT * s)
    if tilt_axis == "x":
        sy = sy / _TILT_SQUASH
    elif tilt_axis == "y":
        sx = sx / _TILT_SQUASH
    elif tilt_axis is not None:
        raise ConfigError(f"unknown tilt axis {tilt_axis!r}")
    ox = (cos_t * sx + sin_t * sy) / (recipe.scale * recipe.aspect[0])
    oy = (-sin_t * sx + cos_t * sy) / (recipe.scale * recipe.aspect[1])

    part_idx = np.full(ox.shape, -1, dtype=np.int64)
    for i, ((kind, cx, cy, a, b, _color), pj) in enumerate(zip(recipe.parts, recipe.part_scales)):
        hit = _part_mask(kind, (ox - cx) / pj, (oy - cy) / pj, a, b)
        part_idx[hit] = i

    # background, optionally striped (diagonal, 4 px period at full res)
    lut = np.zeros((len(recipe.parts) + 1, 3))
    lut[0] = recipe.background
    for i, (_k, _cx, _cy, _a, _b, color) in enumerate(recipe.parts):
        lut[i + 1] = recipe.palette[color]
    rgb = lut[part_idx + 1]
    if recipe.bg_pattern == "stripes":
        stripe = ((px + py) // 4.0).astype(np.int64) % 2 == 1
        paint = stripe & (part_idx < 0)
        rgb[paint] = recipe.background2

    image = rgb.reshape(s, 2, s, 2, 3).mean(axis=(1, 3)).transpose(2, 0, 1)
    mask = (part_idx >= 0).reshape(s, 2, s, 2).any(axis=(1, 3))
    cols = np.flatnonzero(mask.any(axis=0))
    rows = np.flatnonzero(mask.any(axis=1))
    bbox = (
        float(cols[0]),
        float(rows[0]),
        float(cols[-1] - cols[0] + 1),
        float(rows[-1] - rows[0] + 1),
    )

    if occluder_phase is not None:
        image = _paint_occluder(image, mask, occluder_phase)
    if recipe.blur > 0.0:
        image = (1.0 - recipe.blur) * image + recipe.blur * _box_blur3(image)
    return np.clip(image, 0.0, 1.0), bbox


def _paint_occluder(image: np.ndarray, mask: np.ndarray, phase: float) -> np.ndarray:
    """Vertical band from the bottom edge; covers <= 30% of object pixels.

    The band narrows two pixels at a time until the budget holds, so a
    central grip can vanish entirely rather than exceed it.
    """
    s = image.shape[1]
    y_top = int(round(0.30 * s))
    cx = phase * s
    width = s // 4
    total = int(mask.sum())
    while width > 0:
        x0 = int(round(cx - width / 2.0))
        x1 = x0 + width
        x0, x1 = max(x0, 0), min(x1, s)
        covered = int(mask[y_top:, x0:x1].sum())
        if covered <= _OCCLUDER_BUDGET * total:
            break
        width -= 2
    if width <= 0:
        return image
    out = image.copy()
    for c in range(3):
        out[c, y_top:, x0:x1] = _HAND_RGB[c]
    return out


def _kind_motion(kind: str):
    """(sign, tilt axis) for a rotation kind; z spins in plane."""
    axis = kind[len("rotation_")]
    sign = 1.0 if kind.endswith("+") else -1.0
    return sign, (None if axis == "z" else axis)


_HODGE_AXES = (None, "x", "y")


def generate(config: SynthConfig, out_dir) -> Manifest:
    """Write frames + manifest; returns the manifest."""
    return _generate(config, out_dir, style=None, strength=0.0, object_offset=0)


def generate_transfer(config: SynthConfig, style: str, out_dir, strength: float = 0.5) -> Manifest:
    """Same archetypes, fresh instances, shifted rendering statistics."""
    if style not in TRANSFER_STYLES:
        raise ConfigError(f"unknown transfer style {style!r}; expected one of {TRANSFER_STYLES}")
    if not 0.0 <= strength <= 1.0:
        raise ConfigError(f"strength must be in [0, 1], got {strength}")
    return _generate(config, out_dir, style=style, strength=strength, object_offset=1000)


def _generate(config, out_dir, style, strength, object_offset) -> Manifest:
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    records = []
    video_id = 0
    for c in range(config.num_classes):
        for m in range(config.objects_per_class):
            obj = m + object_offset
            recipe = make_recipe(config.seed, c, obj, style=style, strength=strength)
            for kind in config.video_kinds:
                vrng = Rng(derive_seed(config.seed, "video", c, obj, kind))
                phase0 = vrng.uniform() * 360.0
                if kind != "hodgepodge":
                    sign, tilt = _kind_motion(kind)
                for k in range(config.frames_per_video):
                    t = k / config.fps
                    if kind == "hodgepodge":
                        angle = vrng.uniform() * 360.0
                        tilt = _HODGE_AXES[vrng.randint(3)]
                    else:
                        angle = phase0 + sign * config.degrees_per_second * t
                    occ = vrng.uniform() if config.occluder else None
                    image, bbox = render_frame(recipe, angle, occ, config.image_size, tilt_axis=tilt)
                    rel = f"frames/v{video_id:05d}_f{k:03d}.ppm"
                    write_image_ppm(out_dir / rel, image)
                    records.append(FrameRecord(c, obj, video_id, kind, t, rel, bbox))
                video_id += 1

    manifest = Manifest(records=records, fps=config.fps, duration=config.duration, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.jsonl")
    echo = dict(asdict(config), style=style, strength=strength, object_offset=object_offset)
    (out_dir / "generation_config.json").write_text(json.dumps(echo, indent=2) + "\n", encoding="utf-8")
    return manifest
