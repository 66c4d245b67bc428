"""Positive-pair selection: self, transform (gapped), object, class.

A batch holds 2N images as consecutive pairs (rows 2k, 2k+1).  Partner
selection is uniform over the valid candidate set for the anchor; a
gap of zero in either mode degenerates to the self setting and draws
nothing from the generator, so self and gap-0 runs share streams.
"""

from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, apply as apply_augment
from .dataio import FrameImageCache, FrameRecord, Manifest, read_image, square_crop
from .errors import BatchError, ConfigError, NoValidPartnerError
from .rng import Rng

SETTINGS = ("self", "transform", "object", "class_level")

# how far gap*fps may sit from an integer; admits the reported two-decimal
# gap values (0.67 s at 3 fps is frame offset 2.01)
_OFFSET_TOL = 0.05


@dataclass(frozen=True)
class GapSpec:
    mode: str  # "fixed" or "range"
    gap_seconds: float
    fps: float

    def __post_init__(self):
        if self.mode not in ("fixed", "range"):
            raise ConfigError(f"gap mode must be 'fixed' or 'range', got {self.mode!r}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.gap_seconds < 0:
            raise ConfigError(f"gap_seconds must be >= 0, got {self.gap_seconds}")
        frames = self.gap_seconds * self.fps
        if abs(frames - round(frames)) > _OFFSET_TOL:
            raise ConfigError(
                f"gap {self.gap_seconds} s is not a frame multiple at {self.fps} fps"
            )

    @property
    def frame_offset(self) -> int:
        return int(round(self.gap_seconds * self.fps))


@dataclass(frozen=True)
class PairingPolicy:
    setting: str
    gap: GapSpec | None = None
    rotation_only: bool = False

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.setting == "transform" and self.gap is None:
            raise ConfigError("transform setting requires a GapSpec")
        if self.setting != "transform" and self.gap is not None:
            raise ConfigError(f"{self.setting} setting takes no GapSpec")


@dataclass(frozen=True)
class PairBatch:
    images: np.ndarray  # (2N, 3, H, W)
    records: tuple  # 2N FrameRecords, pairs at (2k, 2k+1)

    def __post_init__(self):
        if self.images.shape[0] != len(self.records) or len(self.records) % 2:
            raise BatchError(
                f"images/records mismatch: {self.images.shape[0]} vs {len(self.records)}"
            )

    @property
    def num_pairs(self) -> int:
        return len(self.records) // 2


def _eligible(record: FrameRecord, policy: PairingPolicy) -> bool:
    return not (policy.rotation_only and record.video_kind == "hodgepodge")


def _no_partner(anchor: FrameRecord, detail: str) -> NoValidPartnerError:
    err = NoValidPartnerError(detail)
    err.anchor = anchor  # lets batch builders swap out the blocked anchor
    return err


def sample_partner(
    anchor: FrameRecord,
    manifest: Manifest,
    policy: PairingPolicy,
    rng: Rng,
    exclude=frozenset(),
) -> FrameRecord:
    """Uniform draw from the anchor's valid partner set; self needs no draw.

    `exclude` removes records already claimed elsewhere in a batch; the
    self and gap-0 settings return the anchor itself regardless.
    """
    if policy.setting == "self":
        return anchor

    if policy.setting == "transform":
        offset = policy.gap.frame_offset
        if offset == 0:
            return anchor
        frames = manifest.video_frames(anchor.video_id)
        k = frames.index(anchor)
        if policy.gap.mode == "fixed":
            candidates = [
                frames[j] for j in (k - offset, k + offset) if 0 <= j < len(frames)
            ]
        else:
            lo = max(0, k - offset)
            candidates = frames[lo:k] + frames[k + 1 : k + offset + 1]
        candidates = [r for r in candidates if r not in exclude]
        if not candidates:
            raise _no_partner(
                anchor,
                f"no free frame at gap {policy.gap.gap_seconds} s from "
                f"t={anchor.t} in video {anchor.video_id}",
            )
        return rng.choice(candidates)

    if policy.setting == "object":
        pool = manifest.object_frames(anchor.class_id, anchor.object_id)
    else:  # class_level
        pool = manifest.class_frames(anchor.class_id)
    candidates = [
        r for r in pool if r != anchor and _eligible(r, policy) and r not in exclude
    ]
    if not candidates:
        raise _no_partner(
            anchor, f"no partner for class {anchor.class_id} object {anchor.object_id}"
        )
    return rng.choice(candidates)


def crop_pixels(image: np.ndarray, bbox) -> np.ndarray:
    """Integer pixel window for the squared bbox, clamped to the image."""
    _, img_h, img_w = image.shape
    x, y, w, h = square_crop(bbox, img_w, img_h)
    side = min(int(round(w)), img_w, img_h)
    x0 = min(max(int(round(x)), 0), img_w - side)
    y0 = min(max(int(round(y)), 0), img_h - side)
    return image[:, y0 : y0 + side, x0 : x0 + side]


def build_batch_from_anchors(
    manifest: Manifest,
    anchors,
    policy: PairingPolicy,
    rng: Rng,
    augment: AugmentConfig,
    cache: FrameImageCache | None = None,
) -> PairBatch:
    """Pair the given anchors in order; anchor rows sit at even indices.

    Partners are drawn uniformly over each anchor's still-unclaimed
    candidates, so every provenance record in the batch is distinct
    (self and gap-0 pairs aside, which repeat their anchor by
    definition). An anchor whose candidates are all claimed raises a
    no-valid-partner error carrying that anchor, the resample signal.
    """
    anchors = list(anchors)
    if not anchors:
        raise BatchError("need at least one anchor")
    used = set(anchors)
    if len(used) != len(anchors):
        raise BatchError("anchors must be distinct")

    pairs = []
    for anchor in anchors:
        partner = sample_partner(anchor, manifest, policy, rng, exclude=used)
        if partner != anchor:
            used.add(partner)
        pairs.append((anchor, partner))

    images, records = [], []
    for anchor, partner in pairs:
        for rec in (anchor, partner):
            raw = cache.image(rec) if cache is not None else read_image(manifest.image_path(rec))
            images.append(apply_augment(crop_pixels(raw, rec.bbox), augment, rng))
            records.append(rec)
    return PairBatch(images=np.stack(images), records=tuple(records))


def build_batch(
    manifest: Manifest,
    policy: PairingPolicy,
    n: int,
    rng: Rng,
    augment: AugmentConfig,
    cache: FrameImageCache | None = None,
) -> PairBatch:
    """Draw N distinct anchors, pair each, augment all 2N crops."""
    if n < 1:
        raise BatchError(f"need n >= 1, got {n}")
    pool = [r for r in manifest.records if _eligible(r, policy)]
    if len(pool) < n:
        raise BatchError(f"manifest has {len(pool)} eligible frames, need {n} anchors")
    anchors = [pool[i] for i in rng.sample_indices(len(pool), n)]
    remaining = [r for r in pool if r not in set(anchors)]
    while True:
        try:
            return build_batch_from_anchors(manifest, anchors, policy, rng, augment, cache)
        except NoValidPartnerError as err:
            # resample-anchor signal: swap the blocked anchor and retry
            if not remaining:
                raise BatchError("no anchor with a valid partner remains") from err
            anchors[anchors.index(err.anchor)] = remaining.pop(rng.randint(len(remaining)))


def gap_grid(fps: float) -> list:
    """The sweep grids, as the gaps are reported (two decimals at 3 fps)."""
    if abs(fps - 1.0) < 1e-9:
        return [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    if abs(fps - 3.0) < 1e-9:
        return [0.0, 0.67, 1.33, 2.0, 2.67, 3.33]
    raise ConfigError(f"no gap grid for fps {fps}; supported: 1 and 3")
