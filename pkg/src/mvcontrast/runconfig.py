"""Run configuration files.

A run config is a JSON document with fixed sections (data, model, loss,
sampler, augment, train, report).  Resolution fills every omitted field
from the defaults below and rejects unknown sections or keys, so a typo
fails loudly instead of silently training with a default.  The resolved
document is what gets echoed next to run outputs.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError
from .model import BackboneSpec, ProjectionSpec
from .sampler import GapSpec
from .synthdata import SynthConfig
from .trainer import ExperimentConfig

DEFAULTS = {
    "data": {
        "dataset_dir": "dataset",
        "num_classes": 8,
        "objects_per_class": 8,
        "rotations_per_object": 2,
        "fps": 3.0,
        "duration": 10.0,
        "revolutions": 2.0,
        "image_size": 32,
        "occluder": True,
        "seed": 0,
    },
    "model": {
        "stages": [[16, 3, 2], [32, 3, 2], [64, 3, 2], [64, 3, 2]],
        "feature_dim": 64,
        "input_hw": [32, 32],
        "batch_norm": False,
        "proj_hidden": 64,
        "proj_dim": 32,
    },
    "loss": {"tau": 0.5},
    "sampler": {"gap_mode": "fixed", "gap_seconds": 0.67, "rotation_only": True},
    "augment": {
        "brightness": 0.4,
        "contrast": 0.4,
        "saturation": 0.4,
        "grayscale_prob": 0.2,
        "crop_scale": [0.5, 1.0],
        "flip_prob": 0.5,
    },
    "train": {
        "batch_pairs": 16,
        "pretrain_epochs": 14,
        "eval_epochs": 12,
        "lr": 0.05,
        "eval_lr": 0.2,
        "momentum": 0.9,
        "eval_fraction": 0.10,
        "holdout_objects_per_class": 2,
        "seed": 0,
    },
    "report": {"out_dir": "runs"},
}


def _check_type(section: str, key: str, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, (int, float)):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(
            f"config {section}.{key} expects {type(default).__name__}, "
            f"got {type(value).__name__}"
        )


def resolve_config(raw: dict) -> dict:
    """Defaults overlaid with `raw`; unknown sections or keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    resolved = copy.deepcopy(DEFAULTS)
    for section, fields in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(
                f"unknown config section {section!r}; expected one of {sorted(DEFAULTS)}"
            )
        if not isinstance(fields, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in fields.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(
                    f"unknown key {key!r} in config section {section!r}; "
                    f"expected one of {sorted(DEFAULTS[section])}"
                )
            _check_type(section, key, DEFAULTS[section][key], value)
            resolved[section][key] = copy.deepcopy(value)
    return resolved


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    return resolve_config(raw)


def write_config_echo(resolved: dict, path) -> None:
    """The fully-resolved config, written next to whatever it produced."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def synth_config(resolved: dict) -> SynthConfig:
    d = resolved["data"]
    return SynthConfig(
        num_classes=d["num_classes"],
        objects_per_class=d["objects_per_class"],
        rotations_per_object=d["rotations_per_object"],
        fps=d["fps"],
        duration=d["duration"],
        revolutions=d["revolutions"],
        image_size=d["image_size"],
        occluder=d["occluder"],
        seed=d["seed"],
    )


def backbone_spec(resolved: dict) -> BackboneSpec:
    m = resolved["model"]
    return BackboneSpec(
        stages=tuple(tuple(stage) for stage in m["stages"]),
        feature_dim=m["feature_dim"],
        input_hw=tuple(m["input_hw"]),
        batch_norm=m["batch_norm"],
    )


def projection_spec(resolved: dict) -> ProjectionSpec:
    m = resolved["model"]
    return ProjectionSpec(hidden_dim=m["proj_hidden"], out_dim=m["proj_dim"])


def augment_config(resolved: dict) -> AugmentConfig:
    a = resolved["augment"]
    return AugmentConfig(
        brightness=a["brightness"],
        contrast=a["contrast"],
        saturation=a["saturation"],
        grayscale_prob=a["grayscale_prob"],
        crop_scale=tuple(a["crop_scale"]),
        flip_prob=a["flip_prob"],
        out_hw=tuple(resolved["model"]["input_hw"]),  # crops feed the backbone
    )


def experiment_config(resolved: dict, mode: str, seed: int | None = None) -> ExperimentConfig:
    t = resolved["train"]
    s = resolved["sampler"]
    gap = None
    if mode == "simclr_transform":
        gap = GapSpec(s["gap_mode"], s["gap_seconds"], resolved["data"]["fps"])
    return ExperimentConfig(
        dataset_dir=resolved["data"]["dataset_dir"],
        mode=mode,
        gap=gap,
        rotation_only=s["rotation_only"],
        backbone=backbone_spec(resolved),
        projection=projection_spec(resolved),
        augment=augment_config(resolved),
        tau=resolved["loss"]["tau"],
        batch_pairs=t["batch_pairs"],
        pretrain_epochs=t["pretrain_epochs"],
        eval_epochs=t["eval_epochs"],
        lr=t["lr"],
        eval_lr=t["eval_lr"],
        momentum=t["momentum"],
        eval_fraction=t["eval_fraction"],
        holdout_objects_per_class=t["holdout_objects_per_class"],
        seed=t["seed"] if seed is None else seed,
    )
