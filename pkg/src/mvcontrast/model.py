"""Backbone encoder, projection head, and linear classifier.

The backbone is a plain stack of strided conv + bias + ReLU stages ending
in a global mean pool; the projection head is two affine layers with one
ReLU; the classifier is a single affine map over backbone features. There
is no batch-dependent normalization by default, so each row of a batch is
processed independently of the others (an optional per-stage batch norm
can be switched on, at the cost of that independence).

Parameter names: conv{i}.kernels / conv{i}.bias (1-based stages),
bn{i}.gamma / bn{i}.beta when batch_norm is on, proj.w1/b1/w2/b2, and
fc.w / fc.b once a classifier head is attached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .errors import ConfigError, ShapeError
from .numcore import Array, ParamStore
from .rng import Rng, derive_seed


@dataclass(frozen=True)
class BackboneSpec:
    """Conv stages as (out_channels, kernel, stride); global mean pool after.

    Padding is kernel // 2 at every stage. feature_dim must equal the last
    stage's out_channels because the mean pool maps (B, C, H, W) -> (B, C).
    """

    stages: tuple = ((16, 3, 2), (32, 3, 2), (64, 3, 2), (64, 3, 2))
    feature_dim: int = 64
    in_channels: int = 3
    input_hw: tuple = (32, 32)
    batch_norm: bool = False

    def __post_init__(self):
        if len(self.stages) < 2:
            raise ConfigError(f"backbone needs at least 2 conv stages, got {len(self.stages)}")
        if self.feature_dim < 8:
            raise ConfigError(f"feature_dim must be >= 8, got {self.feature_dim}")
        for ch, k, s in self.stages:
            if ch < 1 or k < 1 or s < 1:
                raise ConfigError(f"bad conv stage (channels={ch}, kernel={k}, stride={s})")
        if self.stages[-1][0] != self.feature_dim:
            raise ConfigError(
                f"feature_dim {self.feature_dim} must equal last stage channels "
                f"{self.stages[-1][0]} (global mean pool)"
            )


@dataclass(frozen=True)
class ProjectionSpec:
    """Two affine layers with one ReLU between; output dimension d."""

    hidden_dim: int = 64
    out_dim: int = 32

    def __post_init__(self):
        if self.hidden_dim < 1 or self.out_dim < 1:
            raise ConfigError(f"bad projection dims ({self.hidden_dim}, {self.out_dim})")


@dataclass(frozen=True)
class ClassifierSpec:
    """Single affine map feature_dim -> num_classes."""

    num_classes: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")


@dataclass
class Model:
    """Parameter store plus the specs needed to run it."""

    backbone: BackboneSpec
    projection: ProjectionSpec
    classifier: ClassifierSpec | None
    store: ParamStore

    def backbone_param_names(self) -> list[str]:
        return [n for n in self.store.names() if n.startswith(("conv", "bn"))]

    def projection_param_names(self) -> list[str]:
        return [n for n in self.store.names() if n.startswith("proj.")]

    def classifier_param_names(self) -> list[str]:
        return [n for n in self.store.names() if n.startswith("fc.")]


def _he_uniform(rng: Rng, fan_in: int, shape) -> Array:
    bound = math.sqrt(6.0 / fan_in)
    flat = [rng.uniform_in(-bound, bound) for _ in range(int(np.prod(shape)))]
    return Array(np.array(flat).reshape(shape))


def init_model(
    backbone: BackboneSpec,
    proj: ProjectionSpec,
    seed: int,
    classifier: ClassifierSpec | None = None,
) -> Model:
    """Fresh parameters: He-style fan-in-scaled uniform weights, zero biases.

    Deterministic in `seed`; every tensor draws from its own derived stream
    so inserting or removing a stage does not shift the others.
    """
    store = ParamStore()
    in_ch = backbone.in_channels
    for idx, (out_ch, k, _) in enumerate(backbone.stages, start=1):
        r = Rng(derive_seed(seed, "init", f"conv{idx}"))
        store.add(f"conv{idx}.kernels", _he_uniform(r, in_ch * k * k, (out_ch, in_ch, k, k)))
        store.add(f"conv{idx}.bias", Array.zeros((out_ch,)))
        if backbone.batch_norm:
            store.add(f"bn{idx}.gamma", Array.full((out_ch,), 1.0))
            store.add(f"bn{idx}.beta", Array.zeros((out_ch,)))
        in_ch = out_ch
    r = Rng(derive_seed(seed, "init", "proj1"))
    store.add("proj.w1", _he_uniform(r, backbone.feature_dim, (backbone.feature_dim, proj.hidden_dim)))
    store.add("proj.b1", Array.zeros((proj.hidden_dim,)))
    r = Rng(derive_seed(seed, "init", "proj2"))
    store.add("proj.w2", _he_uniform(r, proj.hidden_dim, (proj.hidden_dim, proj.out_dim)))
    store.add("proj.b2", Array.zeros((proj.out_dim,)))
    model = Model(backbone, proj, None, store)
    if classifier is not None:
        attach_classifier(model, classifier)
    return model


def attach_classifier(model: Model, spec: ClassifierSpec) -> Model:
    """Add a zero-initialized fc head (zero weights -> uniform softmax)."""
    if model.classifier is not None:
        raise ConfigError("model already has a classifier head")
    model.store.add("fc.w", Array.zeros((model.backbone.feature_dim, spec.num_classes)))
    model.store.add("fc.b", Array.zeros((spec.num_classes,)))
    model.classifier = spec
    return model


def embed(model: Model, images: Array) -> Array:
    """Backbone features (B, feature_dim); accepts (C, H, W) or (B, C, H, W)."""
    spec = model.backbone
    x = images if images.ndim == 4 else nc.reshape(images, (1, *images.shape))
    h, w = spec.input_hw
    if x.ndim != 4 or x.shape[1] != spec.in_channels or x.shape[2] != h or x.shape[3] != w:
        raise ShapeError(
            f"expected images (B, {spec.in_channels}, {h}, {w}), got {images.shape}"
        )
    store = model.store
    # inputs arrive in [0,1]; centering keeps the first-stage activations off
    # the all-positive cone where every embedding starts near-collinear
    x = nc.sub(x, Array(np.full(x.shape, 0.5)))
    for idx, (_, k, stride) in enumerate(spec.stages, start=1):
        x = nc.conv2d(x, store.value(f"conv{idx}.kernels"), stride=stride, padding=k // 2)
        x = nc.add_chanvec(x, store.value(f"conv{idx}.bias"))
        if spec.batch_norm:
            x = nc.batch_norm(x, store.value(f"bn{idx}.gamma"), store.value(f"bn{idx}.beta"))
        x = nc.relu(x)
    return nc.mean_pool_hw(x)


def project(model: Model, features: Array) -> Array:
    """z = l2_normalize(w2 . relu(w1 . f + b1) + b2), rows unit-norm."""
    store = model.store
    if features.ndim != 2 or features.shape[1] != model.backbone.feature_dim:
        raise ShapeError(
            f"expected features (B, {model.backbone.feature_dim}), got {features.shape}"
        )
    h = nc.relu(nc.add_rowvec(nc.matmul(features, store.value("proj.w1")), store.value("proj.b1")))
    raw = nc.add_rowvec(nc.matmul(h, store.value("proj.w2")), store.value("proj.b2"))
    return nc.l2_normalize(raw)


def classify(model: Model, features: Array) -> Array:
    """Raw logits (B, num_classes) from backbone features; no projection head."""
    if model.classifier is None:
        raise ConfigError("no classifier head attached")
    if features.ndim != 2 or features.shape[1] != model.backbone.feature_dim:
        raise ShapeError(
            f"expected features (B, {model.backbone.feature_dim}), got {features.shape}"
        )
    store = model.store
    return nc.add_rowvec(nc.matmul(features, store.value("fc.w")), store.value("fc.b"))


def freeze_encoder(model: Model) -> None:
    """Linear-eval contract: backbone and projection stop receiving updates."""
    for name in model.backbone_param_names() + model.projection_param_names():
        model.store.set_trainable(name, False)


def encoder_is_frozen(model: Model) -> bool:
    names = model.backbone_param_names() + model.projection_param_names()
    return all(not model.store[n].trainable for n in names)
