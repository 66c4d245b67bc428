"""Generator: render determinism, bbox tightness, counts, transfer shifts."""

import json

import numpy as np
import pytest

from mvcontrast.dataio import ROTATION_KINDS, load_manifest, read_image
from mvcontrast.errors import ConfigError
from mvcontrast.rng import Rng, derive_seed
from mvcontrast.synthdata import (
    MAX_CLASSES,
    SynthConfig,
    TRANSFER_STYLES,
    generate,
    generate_transfer,
    make_recipe,
    render_frame,
)

TINY = SynthConfig(
    num_classes=2,
    objects_per_class=2,
    rotations_per_object=1,
    fps=2.0,
    duration=2.0,
    image_size=16,
    occluder=False,
    seed=7,
)


def scan_object_mask(recipe, angle, size, tilt_axis=None):
    """Object pixels found by comparing against the flat background."""
    img, _ = render_frame(recipe, angle, None, size, tilt_axis=tilt_axis)
    bg = np.array(recipe.background).reshape(3, 1, 1)
    return np.any(img != bg, axis=0)


# ----------------------------------------------------------------- config --


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(num_classes=1)
    with pytest.raises(ConfigError):
        SynthConfig(num_classes=MAX_CLASSES + 1)
    with pytest.raises(ConfigError):
        SynthConfig(objects_per_class=1)
    with pytest.raises(ConfigError):
        SynthConfig(rotations_per_object=7)
    with pytest.raises(ConfigError):
        SynthConfig(fps=3.0, duration=10.1)  # non-integer frame count
    with pytest.raises(ConfigError):
        SynthConfig(image_size=4)


def test_sequence_arithmetic():
    desk = SynthConfig(num_classes=8, objects_per_class=8, rotations_per_object=2)
    assert desk.num_sequences == 192
    assert desk.frames_per_video == 30
    paper = SynthConfig(
        num_classes=12,
        objects_per_class=30,
        rotations_per_object=6,
        fps=1.0,
        duration=20.0,
    )
    assert paper.num_sequences == 2520
    # two revolutions over the clip, exactly
    assert paper.degrees_per_second * paper.duration == 720.0
    assert desk.degrees_per_second * desk.duration == 720.0


# ----------------------------------------------------------------- render --


def test_render_deterministic():
    r = make_recipe(1, 3, 5)
    a, boxa = render_frame(r, 33.0, 0.4, 24)
    b, boxb = render_frame(r, 33.0, 0.4, 24)
    assert np.array_equal(a, b) and boxa == boxb


def test_render_periodic_in_angle():
    r = make_recipe(2, 0, 0)
    for base in (0.0, 90.0, 123.456):
        a, boxa = render_frame(r, base, None, 20)
        b, boxb = render_frame(r, base + 360.0, None, 20)
        assert np.array_equal(a, b) and boxa == boxb


def test_render_tilt_axes_differ():
    r = make_recipe(3, 1, 1)
    z, _ = render_frame(r, 30.0, None, 24)
    x, _ = render_frame(r, 30.0, None, 24, tilt_axis="x")
    y, _ = render_frame(r, 30.0, None, 24, tilt_axis="y")
    assert not np.array_equal(z, x)
    assert not np.array_equal(z, y)
    assert not np.array_equal(x, y)
    with pytest.raises(ConfigError):
        render_frame(r, 30.0, None, 24, tilt_axis="w")


def test_bbox_ignores_occluder():
    r = make_recipe(4, 2, 2)
    _, clean = render_frame(r, 75.0, None, 32)
    for phase in (0.1, 0.5, 0.9):
        _, occluded = render_frame(r, 75.0, phase, 32)
        assert occluded == clean


def test_bbox_tight_pixel_scan():
    rng = Rng(11)
    for trial in range(40):
        cls = rng.randint(MAX_CLASSES)
        r = make_recipe(5, cls, rng.randint(100))
        angle = rng.uniform() * 360.0
        tilt = (None, "x", "y")[rng.randint(3)]
        _, (x, y, w, h) = render_frame(r, angle, None, 28, tilt_axis=tilt)
        mask = scan_object_mask(r, angle, 28, tilt_axis=tilt)
        cols = np.flatnonzero(mask.any(axis=0))
        rows = np.flatnonzero(mask.any(axis=1))
        assert (x, y) == (cols[0], rows[0])
        assert (w, h) == (cols[-1] - cols[0] + 1, rows[-1] - rows[0] + 1)
        # every border row/column of the box holds at least one object pixel
        xi, yi, wi, hi = int(x), int(y), int(w), int(h)
        assert mask[yi, xi : xi + wi].any() and mask[yi + hi - 1, xi : xi + wi].any()
        assert mask[yi : yi + hi, xi].any() and mask[yi : yi + hi, xi + wi - 1].any()


def test_occluder_budget_and_band():
    hand = np.array([0.87, 0.66, 0.50]).reshape(3, 1, 1)
    painted = 0
    for phase in (0.05, 0.3, 0.5, 0.7, 0.95):
        r = make_recipe(6, int(phase * 10) % MAX_CLASSES, 1)
        img, _ = render_frame(r, 50.0, phase, 32)
        mask = scan_object_mask(r, 50.0, 32)
        y_top = int(round(0.30 * 32))
        band_cols = np.flatnonzero(np.all(img[:, y_top:, :] == hand, axis=(0, 1)))
        if band_cols.size == 0:
            continue
        painted += 1
        covered = mask[y_top:, band_cols[0] : band_cols[-1] + 1].sum()
        assert covered <= 0.30 * mask.sum()
    assert painted >= 3  # the band should usually survive the budget


# --------------------------------------------------------------- generate --


def test_generate_counts_and_schema(tmp_path):
    m = generate(TINY, tmp_path / "d")
    assert len(m.video_ids()) == TINY.num_sequences == 8
    assert len(m.records) == 8 * TINY.frames_per_video
    kinds = {r.video_kind for r in m.records}
    assert kinds == {"rotation_x+", "hodgepodge"}
    assert m.class_ids() == [0, 1]
    assert m.object_ids(0) == [0, 1]
    loaded = load_manifest(tmp_path / "d" / "manifest.jsonl")
    assert loaded.records == m.records
    assert loaded.fps == TINY.fps and loaded.duration == TINY.duration
    echo = json.loads((tmp_path / "d" / "generation_config.json").read_text())
    assert echo["num_classes"] == 2 and echo["seed"] == 7 and echo["style"] is None


def test_generate_deterministic(tmp_path):
    a = generate(TINY, tmp_path / "a")
    b = generate(TINY, tmp_path / "b")
    assert a.records == b.records
    rec = a.records[5]
    assert (tmp_path / "a" / rec.image).read_bytes() == (tmp_path / "b" / rec.image).read_bytes()


def test_generated_frames_follow_documented_streams(tmp_path):
    cfg = SynthConfig(
        num_classes=2,
        objects_per_class=2,
        rotations_per_object=1,
        fps=2.0,
        duration=1.5,
        image_size=16,
        occluder=True,
        seed=13,
    )
    m = generate(cfg, tmp_path / "d")
    dps = cfg.degrees_per_second

    def quantized(img):
        return np.clip(np.rint(img * 255.0), 0, 255) / 255.0

    # rotation video: start phase then one occluder draw per frame
    recs = [r for r in m.records if r.class_id == 1 and r.object_id == 0 and r.video_kind == "rotation_x+"]
    recipe = make_recipe(13, 1, 0)
    vrng = Rng(derive_seed(13, "video", 1, 0, "rotation_x+"))
    phase0 = vrng.uniform() * 360.0
    for k, rec in enumerate(recs):
        angle = phase0 + dps * (k / cfg.fps)
        occ = vrng.uniform()
        want, bbox = render_frame(recipe, angle, occ, 16, tilt_axis="x")
        assert rec.bbox == bbox
        assert np.array_equal(read_image(m.image_path(rec)), quantized(want))

    # hodgepodge video: per-frame angle, tilt, occluder draws
    recs = [r for r in m.records if r.class_id == 0 and r.object_id == 1 and r.video_kind == "hodgepodge"]
    recipe = make_recipe(13, 0, 1)
    vrng = Rng(derive_seed(13, "video", 0, 1, "hodgepodge"))
    vrng.uniform()  # unused start phase keeps video streams uniform
    for rec in recs:
        angle = vrng.uniform() * 360.0
        tilt = (None, "x", "y")[vrng.randint(3)]
        occ = vrng.uniform()
        want, bbox = render_frame(recipe, angle, occ, 16, tilt_axis=tilt)
        assert rec.bbox == bbox
        assert np.array_equal(read_image(m.image_path(rec)), quantized(want))


def test_consecutive_rotation_frames_step_uniformly():
    # frame k of a rotation video is the recipe rendered at phase + k * step
    cfg = TINY
    step = cfg.degrees_per_second / cfg.fps
    assert step == 180.0  # 2 rev * 360 / (2 s * 2 fps)
    recipe = make_recipe(cfg.seed, 0, 0)
    vrng = Rng(derive_seed(cfg.seed, "video", 0, 0, "rotation_x+"))
    phase0 = vrng.uniform() * 360.0
    a, _ = render_frame(recipe, phase0 + step, None, 16, tilt_axis="x")
    b, _ = render_frame(recipe, phase0 + 2 * step, None, 16, tilt_axis="x")
    direct, _ = render_frame(recipe, phase0 + step + step, None, 16, tilt_axis="x")
    assert np.array_equal(b, direct)
    assert not np.array_equal(a, b)


# ----------------------------------------------------------------- transfer --


def test_transfer_unknown_style_rejected(tmp_path):
    with pytest.raises(ConfigError, match="style"):
        generate_transfer(TINY, "sepia", tmp_path / "t")
    with pytest.raises(ConfigError, match="strength"):
        generate_transfer(TINY, "recolor", tmp_path / "t", strength=1.5)


def test_transfer_fresh_instances_same_classes(tmp_path):
    src = generate(TINY, tmp_path / "src")
    for style in TRANSFER_STYLES:
        dst = generate_transfer(TINY, style, tmp_path / style, strength=0.4)
        assert dst.class_ids() == src.class_ids()
        src_objs = {(r.class_id, r.object_id) for r in src.records}
        dst_objs = {(r.class_id, r.object_id) for r in dst.records}
        assert not src_objs & dst_objs
        assert len(dst.records) == len(src.records)


def test_transfer_zero_strength_matches_base_render():
    for style in TRANSFER_STYLES:
        base = make_recipe(9, 4, 1004)
        shifted = make_recipe(9, 4, 1004, style=style, strength=0.0)
        a, boxa = render_frame(base, 120.0, 0.3, 20)
        b, boxb = render_frame(shifted, 120.0, 0.3, 20)
        assert np.array_equal(a, b) and boxa == boxb


def test_transfer_styles_shift_pixels():
    base = make_recipe(9, 2, 1002)
    ref, refbox = render_frame(base, 40.0, None, 20)
    for style in TRANSFER_STYLES:
        shifted = make_recipe(9, 2, 1002, style=style, strength=0.6)
        img, box = render_frame(shifted, 40.0, None, 20)
        assert not np.array_equal(img, ref)
        if style != "blur":  # blur smears but annotation geometry is unchanged
            assert box == refbox
