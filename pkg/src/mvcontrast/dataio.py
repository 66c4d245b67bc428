"""Frame manifests, bounding-box geometry, object splits, and image files.

Manifest format: JSON Lines, one frame per line with fixed fields
{"class_id", "object_id", "video_id", "video_kind", "t", "image", "bbox"},
bbox as [x, y, w, h] in pixels and image paths relative to the manifest's
directory. Frame rate and nominal duration live in a sidecar
`<manifest>.meta.json` ({"fps": float, "duration": float}); when the
sidecar is missing they are inferred from the timestamps.

Image files: binary PPM (P6, maxval 255) or raw tensors with a 16-byte
header -- magic "MVIM", then three little-endian u32s: dtype code
(1 = float64, 2 = uint8), H, W -- followed by 3*H*W values in C order,
channels first. Pixels are float64 in [0, 1] in memory; PPM/uint8 files
quantize to round(v * 255).
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DegradedCropWarning,
    InterpolationRangeError,
    ManifestError,
    SplitError,
)
from .rng import Rng, derive_seed

VIDEO_KINDS = (
    "rotation_x+",
    "rotation_y+",
    "rotation_z+",
    "rotation_x-",
    "rotation_y-",
    "rotation_z-",
    "hodgepodge",
)
ROTATION_KINDS = VIDEO_KINDS[:-1]

_MANIFEST_FIELDS = {"class_id", "object_id", "video_id", "video_kind", "t", "image", "bbox"}


@dataclass(frozen=True)
class FrameRecord:
    class_id: int
    object_id: int
    video_id: int
    video_kind: str
    t: float
    image: str
    bbox: tuple  # (x, y, w, h) in pixels

    def key(self) -> tuple:
        return (self.class_id, self.object_id, self.video_id, self.t)


@dataclass
class Manifest:
    records: list
    fps: float
    duration: float
    root: Path = field(default_factory=Path)
    _by_video: dict = field(default_factory=dict, repr=False)
    _by_object: dict = field(default_factory=dict, repr=False)
    _by_class: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for r in self.records:
            self._by_video.setdefault(r.video_id, []).append(r)
            self._by_object.setdefault((r.class_id, r.object_id), []).append(r)
            self._by_class.setdefault(r.class_id, []).append(r)
        for frames in self._by_video.values():
            frames.sort(key=lambda r: r.t)

    def __len__(self) -> int:
        return len(self.records)

    def video_frames(self, video_id: int) -> list:
        """Frames of one video in time order."""
        return self._by_video[video_id]

    def object_frames(self, class_id: int, object_id: int) -> list:
        return self._by_object[(class_id, object_id)]

    def class_frames(self, class_id: int) -> list:
        return self._by_class[class_id]

    def class_ids(self) -> list:
        return sorted(self._by_class)

    def object_ids(self, class_id: int) -> list:
        return sorted({r.object_id for r in self._by_class[class_id]})

    def video_ids(self) -> list:
        return sorted(self._by_video)

    def image_path(self, record: FrameRecord) -> Path:
        return self.root / record.image


# --------------------------------------------------------------- manifest --


def _parse_record(obj: dict, lineno: int) -> FrameRecord:
    if set(obj) != _MANIFEST_FIELDS:
        unknown = sorted(set(obj) - _MANIFEST_FIELDS)
        missing = sorted(_MANIFEST_FIELDS - set(obj))
        raise ManifestError(
            f"line {lineno}: bad fields (unknown {unknown}, missing {missing})"
        )
    if obj["video_kind"] not in VIDEO_KINDS:
        raise ManifestError(f"line {lineno}: unknown video_kind {obj['video_kind']!r}")
    bbox = obj["bbox"]
    if not (isinstance(bbox, list) and len(bbox) == 4):
        raise ManifestError(f"line {lineno}: bbox must be [x, y, w, h], got {bbox!r}")
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ManifestError(f"line {lineno}: bbox must have w > 0 and h > 0, got {bbox}")
    t = float(obj["t"])
    if t < 0:
        raise ManifestError(f"line {lineno}: timestamp must be >= 0, got {t}")
    return FrameRecord(
        class_id=int(obj["class_id"]),
        object_id=int(obj["object_id"]),
        video_id=int(obj["video_id"]),
        video_kind=obj["video_kind"],
        t=t,
        image=str(obj["image"]),
        bbox=(x, y, w, h),
    )


def _infer_fps_duration(records: list) -> tuple:
    by_video: dict = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r.t)
    deltas = []
    for ts in by_video.values():
        ts.sort()
        deltas.extend(b - a for a, b in zip(ts, ts[1:]) if b > a)
    if deltas:
        step = min(deltas)
        fps = 1.0 / step
    else:
        fps = 1.0
    duration = max(max(ts) for ts in by_video.values()) + 1.0 / fps
    return fps, duration


def load_manifest(path) -> Manifest:
    """Parse and validate a JSONL manifest; referenced images must exist."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records = []
    seen = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: not valid JSON ({e.msg})") from e
            rec = _parse_record(obj, lineno)
            if rec.key() in seen:
                raise ManifestError(
                    f"line {lineno}: duplicate frame {rec.key()} "
                    "(class_id, object_id, video_id, t must be unique)"
                )
            seen.add(rec.key())
            records.append(rec)
    if not records:
        raise ManifestError(f"empty manifest: {path}")
    root = path.parent
    missing = [r.image for r in records if not (root / r.image).exists()]
    if missing:
        raise ManifestError(
            f"{len(missing)} referenced image files missing, first: {missing[0]}"
        )
    meta_path = path.with_name(path.name + ".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        fps, duration = float(meta["fps"]), float(meta["duration"])
    else:
        fps, duration = _infer_fps_duration(records)
    return Manifest(records=records, fps=fps, duration=duration, root=root)


def write_manifest(manifest: Manifest, path) -> None:
    """Write JSONL plus the fps/duration sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in manifest.records:
            fh.write(
                json.dumps(
                    {
                        "class_id": r.class_id,
                        "object_id": r.object_id,
                        "video_id": r.video_id,
                        "video_kind": r.video_kind,
                        "t": r.t,
                        "image": r.image,
                        "bbox": list(r.bbox),
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(
        json.dumps({"fps": manifest.fps, "duration": manifest.duration}) + "\n",
        encoding="utf-8",
    )


# --------------------------------------------------------------- geometry --


def square_crop(bbox, image_w: int, image_h: int):
    """Expand a box along its shorter dimension to a square of side max(w, h).

    The extended axis is re-centered on the original center; the other axis
    keeps its coordinate. The square is then shifted (never shrunk) to lie
    inside the image. A side larger than the image is clamped to the largest
    square that fits, with a degraded-crop warning.
    """
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ValueError(f"bbox must have positive size, got {bbox}")
    if x >= image_w or y >= image_h or x + w <= 0 or y + h <= 0:
        raise ValueError(f"bbox {bbox} does not intersect a {image_w}x{image_h} image")
    side = max(w, h)
    if w < h:
        nx, ny = x + w / 2.0 - side / 2.0, y
    elif h < w:
        nx, ny = x, y + h / 2.0 - side / 2.0
    else:
        nx, ny = x, y
    if side > image_w or side > image_h:
        warnings.warn(
            f"square side {side:g} exceeds image {image_w}x{image_h}; clamped",
            DegradedCropWarning,
            stacklevel=2,
        )
        side = float(min(image_w, image_h))
    nx = min(max(nx, 0.0), image_w - side)
    ny = min(max(ny, 0.0), image_h - side)
    return (nx, ny, side, side)


def interpolate_bbox(b1, t1: float, b2, t2: float, t: float):
    """Componentwise linear interpolation of (x, y, w, h) for t in (t1, t2]."""
    if not t1 < t <= t2:
        raise InterpolationRangeError(f"t={t} outside ({t1}, {t2}]")
    u = (t - t1) / (t2 - t1)
    if u == 1.0:
        return tuple(float(v) for v in b2)
    return tuple(float(a) + u * (float(b) - float(a)) for a, b in zip(b1, b2))


def reannotate_at_1fps(manifest: Manifest) -> Manifest:
    """Rebuild bboxes as if annotated at 1 fps and linearly interpolated.

    Frames at integer seconds keep their boxes; frames between consecutive
    integer-second annotations get componentwise interpolated boxes; frames
    after a video's last integer-second annotation are dropped.
    """
    out = []
    for vid in manifest.video_ids():
        frames = manifest.video_frames(vid)
        anchors = [r for r in frames if abs(r.t - round(r.t)) < 1e-9]
        if not anchors:
            continue
        last_t = anchors[-1].t
        by_t = {round(r.t): r for r in anchors}
        for r in frames:
            if r.t > last_t:
                continue  # trailing frames beyond the last annotation
            if abs(r.t - round(r.t)) < 1e-9:
                out.append(r)
                continue
            lo = math.floor(r.t)
            hi = lo + 1
            a, b = by_t.get(lo), by_t.get(hi)
            if a is None or b is None:
                continue
            box = interpolate_bbox(a.bbox, a.t, b.bbox, b.t, r.t)
            out.append(replace(r, bbox=box))
    if not out:
        raise ManifestError("reannotation dropped every frame")
    return Manifest(records=out, fps=manifest.fps, duration=manifest.duration, root=manifest.root)


# ----------------------------------------------------------------- splits --


@dataclass(frozen=True)
class SplitSpec:
    holdout_objects_per_class: int
    seed: int

    def __post_init__(self):
        if self.holdout_objects_per_class < 1:
            raise SplitError(f"holdout must be >= 1, got {self.holdout_objects_per_class}")


def split_objects(manifest: Manifest, split: SplitSpec):
    """Hold out `holdout` whole objects per class for testing, seed-determined."""
    holdout = split.holdout_objects_per_class
    test_keys = set()
    for class_id in manifest.class_ids():
        objects = manifest.object_ids(class_id)
        if len(objects) <= holdout:
            raise SplitError(
                f"class {class_id} has {len(objects)} objects, "
                f"cannot hold out {holdout}"
            )
        # each object is scored independently of its class label, so a
        # consistent relabeling of classes never moves the holdout
        def score(obj):
            return (Rng(derive_seed(split.seed, "holdout", obj)).uniform(), obj)

        test_keys.update((class_id, o) for o in sorted(objects, key=score)[:holdout])
    train = [r for r in manifest.records if (r.class_id, r.object_id) not in test_keys]
    test = [r for r in manifest.records if (r.class_id, r.object_id) in test_keys]
    mk = lambda recs: Manifest(
        records=recs, fps=manifest.fps, duration=manifest.duration, root=manifest.root
    )
    return mk(train), mk(test)


def sample_eval_subset(manifest: Manifest, fraction: float, seed: int) -> Manifest:
    """Uniform without-replacement sample of round(fraction * count) frames."""
    if not 0 < fraction <= 1:
        raise SplitError(f"fraction must be in (0, 1], got {fraction}")
    count = len(manifest.records)
    size = round(fraction * count)
    rng = Rng(derive_seed(seed, "eval-subset"))
    picks = sorted(rng.sample_indices(count, size))
    return Manifest(
        records=[manifest.records[i] for i in picks],
        fps=manifest.fps,
        duration=manifest.duration,
        root=manifest.root,
    )


# ----------------------------------------------------------------- images --


def write_image_ppm(path, image: np.ndarray) -> None:
    """image: (3, H, W) float in [0, 1]; quantized to 8-bit binary PPM."""
    c, h, w = image.shape
    if c != 3:
        raise ValueError(f"expected 3 channels, got shape {image.shape}")
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with Path(path).open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.transpose(1, 2, 0).tobytes())  # interleaved RGB rows


def read_image_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if not buf.startswith(b"P6"):
        raise ManifestError(f"not a binary PPM: {path}")
    # header: P6, whitespace-separated width height maxval, one whitespace, raster
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":  # comment line
            while pos < len(buf) and buf[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(buf[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ManifestError(f"unsupported PPM maxval {maxval} in {path}")
    if len(buf) - pos < 3 * w * h:
        raise ManifestError(f"truncated PPM raster in {path}")
    raster = np.frombuffer(buf, dtype=np.uint8, count=3 * w * h, offset=pos)
    return raster.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


MVIM_MAGIC = b"MVIM"
_MVIM_FLOAT64, _MVIM_UINT8 = 1, 2


def write_image_mvim(path, image: np.ndarray, dtype: str = "float64") -> None:
    """16-byte header (magic, dtype code, H, W), then 3*H*W values, C order."""
    c, h, w = image.shape
    if c != 3:
        raise ValueError(f"expected 3 channels, got shape {image.shape}")
    if dtype == "float64":
        code, payload = _MVIM_FLOAT64, np.ascontiguousarray(image, dtype="<f8").tobytes()
    elif dtype == "uint8":
        code = _MVIM_UINT8
        payload = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8).tobytes()
    else:
        raise ValueError(f"unsupported dtype {dtype!r}")
    with Path(path).open("wb") as fh:
        fh.write(MVIM_MAGIC + struct.pack("<III", code, h, w))
        fh.write(payload)


def read_image_mvim(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != MVIM_MAGIC or len(buf) < 16:
        raise ManifestError(f"not an MVIM file: {path}")
    code, h, w = struct.unpack("<III", buf[4:16])
    n = 3 * h * w
    if code == _MVIM_FLOAT64:
        if len(buf) - 16 < 8 * n:
            raise ManifestError(f"truncated MVIM payload in {path}")
        data = np.frombuffer(buf, dtype="<f8", count=n, offset=16)
        return data.reshape(3, h, w).astype(np.float64)
    if code == _MVIM_UINT8:
        if len(buf) - 16 < n:
            raise ManifestError(f"truncated MVIM payload in {path}")
        data = np.frombuffer(buf, dtype=np.uint8, count=n, offset=16)
        return data.reshape(3, h, w).astype(np.float64) / 255.0
    raise ManifestError(f"unknown MVIM dtype code {code} in {path}")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".mvim":
        return read_image_mvim(path)
    return read_image_ppm(path)


class FrameImageCache:
    """Keeps decoded frames in memory, as uint8 when that loses nothing."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._store: dict = {}

    def image(self, record: FrameRecord) -> np.ndarray:
        cached = self._store.get(record.image)
        if cached is None:
            img = read_image(self.root / record.image)
            quant = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
            # 8-bit sources (PPM, uint8 MVIM) round-trip exactly; keep those
            # small. Float sources are cached as-is so values never change.
            cached = quant if np.array_equal(quant / 255.0, img) else img
            self._store[record.image] = cached
        if cached.dtype == np.uint8:
            return cached.astype(np.float64) / 255.0
        return cached
