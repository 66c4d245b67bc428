"""Two-phase training protocol: self-supervised pretraining over positive
pairs, then frozen-encoder linear evaluation on held-out objects, plus the
supervised end-to-end baseline, the gap sweep, and transfer evaluation.

Every stochastic choice comes from a stream derived from the master seed
(object split, model init, epoch shuffles, per-batch sampling), so a
(config, seed) pair reproduces a run bit for bit.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, field, replace
import csv
import hashlib
import json
from pathlib import Path
import time

import numpy as np

from .augment import AugmentConfig, apply as apply_augment, eval_transform
from .contrastive import EmbeddingBatch, ntxent_batch_loss
from .dataio import (
    FrameImageCache,
    Manifest,
    SplitSpec,
    load_manifest,
    sample_eval_subset,
    split_objects,
)
from .errors import ConfigError, DivergenceError, NoValidPartnerError
from .model import (
    BackboneSpec,
    ClassifierSpec,
    Model,
    ProjectionSpec,
    attach_classifier,
    classify,
    embed,
    freeze_encoder,
    init_model,
    project,
)
from .numcore import (
    Array,
    Tape,
    backward,
    cross_entropy_mean,
    load_params,
    save_params,
    sgd_step,
)
from .rng import Rng, derive_seed
from .sampler import GapSpec, PairingPolicy, build_batch_from_anchors, crop_pixels, gap_grid

MODES = ("simclr_self", "simclr_transform", "simclr_object", "simclr_class", "supervised")

_SETTING_FOR_MODE = {
    "simclr_self": "self",
    "simclr_transform": "transform",
    "simclr_object": "object",
    "simclr_class": "class_level",
}

_EVAL_CHUNK = 64


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str = "dataset"
    mode: str = "simclr_self"
    gap: GapSpec | None = None
    rotation_only: bool = True
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    tau: float = 0.5
    batch_pairs: int = 16
    pretrain_epochs: int = 14
    eval_epochs: int = 12
    lr: float = 0.05
    eval_lr: float = 0.2
    momentum: float = 0.9
    eval_fraction: float = 0.10
    holdout_objects_per_class: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "simclr_transform" and self.gap is None:
            raise ConfigError("simclr_transform requires a GapSpec")
        if self.mode != "simclr_transform" and self.gap is not None:
            raise ConfigError(f"mode {self.mode} takes no GapSpec")
        if not 0.0 < self.eval_fraction <= 1.0:
            raise ConfigError(f"eval_fraction must be in (0, 1], got {self.eval_fraction}")
        if self.batch_pairs < 1:
            raise ConfigError(f"batch_pairs must be >= 1, got {self.batch_pairs}")
        if self.pretrain_epochs < 0 or self.eval_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.lr <= 0 or self.eval_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.holdout_objects_per_class < 1:
            raise ConfigError("holdout_objects_per_class must be >= 1")
        if self.augment.out_hw != self.backbone.input_hw:
            raise ConfigError(
                f"augment output {self.augment.out_hw} must match "
                f"backbone input {self.backbone.input_hw}"
            )


def config_fingerprint(config: ExperimentConfig) -> str:
    """Hash of the resolved config without the seed; names the experiment."""
    payload = asdict(config)
    payload.pop("seed")
    payload["dataset_dir"] = str(payload["dataset_dir"])
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MetricsReport:
    run_id: str
    mode: str
    seed: int
    fingerprint: str
    gap: float | None = None
    self_equivalent: bool = False
    dataset: str = ""
    pretrain_loss: tuple = ()
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    per_class_accuracy: dict | None = None
    wall_time_s: float = 0.0
    error: str | None = None

    def __post_init__(self):
        for v in (self.train_accuracy, self.test_accuracy):
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"accuracy out of range: {v}")

    def rows(self) -> list:
        """CSV rows (run_id, mode, gap, seed, epoch, split, metric, value)."""
        if self.error is not None:
            return []
        head = (self.run_id, self.mode, self.gap, self.seed)
        out = []
        for e, v in enumerate(self.pretrain_loss):
            out.append((*head, e, "train", "pretrain_loss", v))
        if self.train_accuracy is not None:
            out.append((*head, "", "train", "accuracy", self.train_accuracy))
        if self.test_accuracy is not None:
            out.append((*head, "", "test", "accuracy", self.test_accuracy))
        for cid in sorted(self.per_class_accuracy or {}):
            out.append((*head, "", "test", f"class_{cid}_accuracy", self.per_class_accuracy[cid]))
        return out


CSV_COLUMNS = ("run_id", "mode", "gap", "seed", "epoch", "split", "metric", "value")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(reports, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            for row in report.rows():
                writer.writerow([_fmt(v) for v in row])


def write_summary_json(report: MetricsReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = asdict(report)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- helpers --


def load_dataset(config: ExperimentConfig) -> Manifest:
    return load_manifest(Path(config.dataset_dir) / "manifest.jsonl")


def _split(config: ExperimentConfig, manifest: Manifest):
    spec = SplitSpec(
        holdout_objects_per_class=config.holdout_objects_per_class,
        seed=derive_seed(config.seed, "object-split"),
    )
    return split_objects(manifest, spec)


def _pool(records, rotation_only: bool) -> list:
    if not rotation_only:
        return list(records)
    return [r for r in records if r.video_kind != "hodgepodge"]


def _policy(config: ExperimentConfig) -> PairingPolicy:
    return PairingPolicy(
        setting=_SETTING_FOR_MODE[config.mode],
        gap=config.gap,
        rotation_only=config.rotation_only,
    )


def _run_id(config: ExperimentConfig, fingerprint: str) -> str:
    return f"{fingerprint[:12]}-seed{config.seed}"


def _gap_seconds(config: ExperimentConfig):
    return config.gap.gap_seconds if config.gap is not None else None


def _is_self_equivalent(config: ExperimentConfig) -> bool:
    return config.mode == "simclr_transform" and config.gap.frame_offset == 0


def _encoder_digest(model: Model) -> str:
    h = hashlib.sha256()
    for name in model.backbone_param_names() + model.projection_param_names():
        h.update(name.encode("utf-8"))
        h.update(model.store.value(name).data.tobytes())
    return h.hexdigest()


def _epoch_chunks(pool_size: int, batch: int, seed: int, epoch: int) -> list:
    """Seeded shuffled pass over all indices, split into batch-size chunks."""
    order = list(range(pool_size))
    Rng(derive_seed(seed, "epoch", epoch)).shuffle(order)
    return [order[i : i + batch] for i in range(0, pool_size, batch)]


def _label_map(manifest: Manifest) -> dict:
    return {cid: i for i, cid in enumerate(manifest.class_ids())}


def _eval_images(records, manifest, cache, out_hw) -> np.ndarray:
    crops = [
        eval_transform(crop_pixels(cache.image(r), r.bbox), out_hw) for r in records
    ]
    return np.stack(crops)


def _accuracy(model, records, manifest, cache, labels, config):
    """Frame-level top-1 with the deterministic eval transform."""
    hits, total = 0, 0
    per_class_hits, per_class_total = {}, {}
    for i in range(0, len(records), _EVAL_CHUNK):
        chunk = records[i : i + _EVAL_CHUNK]
        images = _eval_images(chunk, manifest, cache, config.backbone.input_hw)
        logits = classify(model, embed(model, Array(images))).data
        preds = np.argmax(logits, axis=1)
        for rec, pred in zip(chunk, preds):
            want = labels[rec.class_id]
            per_class_total[rec.class_id] = per_class_total.get(rec.class_id, 0) + 1
            if pred == want:
                hits += 1
                per_class_hits[rec.class_id] = per_class_hits.get(rec.class_id, 0) + 1
            total += 1
    per_class = {
        cid: per_class_hits.get(cid, 0) / n for cid, n in sorted(per_class_total.items())
    }
    return hits / total, per_class


def _augmented_classifier_batch(records, manifest, cache, config, rng):
    images = [
        apply_augment(crop_pixels(cache.image(r), r.bbox), config.augment, rng)
        for r in records
    ]
    return np.stack(images)


def _classifier_pass(model, config, train_records, manifest, cache, labels, epochs, lr):
    """Shuffled epochs of cross-entropy SGD over the given frames."""
    batch_size = 2 * config.batch_pairs
    for epoch in range(epochs):
        chunks = _epoch_chunks(len(train_records), batch_size, config.seed, epoch)
        for b, chunk in enumerate(chunks):
            records = [train_records[i] for i in chunk]
            rng = Rng(derive_seed(config.seed, "batch", epoch, b))
            images = _augmented_classifier_batch(records, manifest, cache, config, rng)
            targets = [labels[r.class_id] for r in records]
            with Tape() as tape:
                logits = classify(model, embed(model, Array(images)))
                loss = cross_entropy_mean(logits, targets)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
                backward(tape, loss, model.store)
            try:
                sgd_step(model.store, lr=lr, momentum=config.momentum)
            except DivergenceError as err:
                raise DivergenceError(f"epoch {epoch} batch {b}: {err}") from None


# ------------------------------------------------------------- operations --


def pretrain(config: ExperimentConfig, run_dir=None, manifest: Manifest | None = None):
    """Self-supervised phase; returns (model, report) and writes a checkpoint."""
    if config.mode == "supervised":
        raise ConfigError("pretrain needs a self-supervised mode")
    start = time.perf_counter()
    manifest = manifest if manifest is not None else load_dataset(config)
    train_m, _ = _split(config, manifest)
    pool = _pool(train_m.records, config.rotation_only)
    policy = _policy(config)
    cache = FrameImageCache(manifest.root)
    model = init_model(config.backbone, config.projection, derive_seed(config.seed, "model"))

    losses = []
    for epoch in range(config.pretrain_epochs):
        chunks = _epoch_chunks(len(pool), config.batch_pairs, config.seed, epoch)
        batch_losses = []
        for b, chunk in enumerate(chunks):
            anchors = [pool[i] for i in chunk]
            rng = Rng(derive_seed(config.seed, "batch", epoch, b))
            batch = None
            while anchors:
                try:
                    batch = build_batch_from_anchors(
                        train_m, anchors, policy, rng, config.augment, cache
                    )
                    break
                except NoValidPartnerError as err:
                    anchors.remove(err.anchor)  # drop blocked anchors, keep the rest
            if batch is None:
                continue
            with Tape() as tape:
                z = project(model, embed(model, Array(batch.images)))
                loss = ntxent_batch_loss(EmbeddingBatch(z, tau=config.tau))
                value = float(loss.data)
                if not np.isfinite(value):
                    raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
                backward(tape, loss, model.store)
            try:
                sgd_step(model.store, lr=config.lr, momentum=config.momentum)
            except DivergenceError as err:
                raise DivergenceError(f"epoch {epoch} batch {b}: {err}") from None
            batch_losses.append(value)
        if not batch_losses:
            raise NoValidPartnerError(
                f"epoch {epoch}: no batch could be paired under gap "
                f"{_gap_seconds(config)} s"
            )
        losses.append(sum(batch_losses) / max(1, len(batch_losses)))

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        save_params(model.store, run_dir / "checkpoint.mvck")

    fingerprint = config_fingerprint(config)
    report = MetricsReport(
        run_id=_run_id(config, fingerprint),
        mode=config.mode,
        seed=config.seed,
        fingerprint=fingerprint,
        gap=_gap_seconds(config),
        self_equivalent=_is_self_equivalent(config),
        dataset=str(manifest.root),
        pretrain_loss=tuple(losses),
        wall_time_s=time.perf_counter() - start,
    )
    return model, report


def _materialize(checkpoint, config: ExperimentConfig) -> Model:
    """Fresh model with the checkpoint's encoder weights; never aliases."""
    model = init_model(config.backbone, config.projection, derive_seed(config.seed, "model"))
    if isinstance(checkpoint, Model):
        for name in model.store.names():
            model.store.replace_value(name, checkpoint.store.value(name))
    else:
        load_params(model.store, checkpoint)
    return model


def linear_eval(checkpoint, config: ExperimentConfig, manifest: Manifest | None = None) -> MetricsReport:
    """Frozen-encoder classifier fit, then frame-level top-1 accuracies."""
    start = time.perf_counter()
    manifest = manifest if manifest is not None else load_dataset(config)
    train_m, test_m = _split(config, manifest)
    subset = sample_eval_subset(
        train_m, config.eval_fraction, derive_seed(config.seed, "eval-subset")
    )
    train_records = _pool(subset.records, config.rotation_only)
    test_records = _pool(test_m.records, config.rotation_only)
    cache = FrameImageCache(manifest.root)
    labels = _label_map(manifest)

    model = _materialize(checkpoint, config)
    attach_classifier(model, ClassifierSpec(num_classes=len(labels)))
    freeze_encoder(model)
    digest_before = _encoder_digest(model)

    _classifier_pass(
        model, config, train_records, manifest, cache, labels, config.eval_epochs, config.eval_lr
    )
    if _encoder_digest(model) != digest_before:
        raise RuntimeError("frozen encoder changed during linear evaluation")

    train_acc, _ = _accuracy(model, train_records, manifest, cache, labels, config)
    test_acc, per_class = _accuracy(model, test_records, manifest, cache, labels, config)
    fingerprint = config_fingerprint(config)
    return MetricsReport(
        run_id=_run_id(config, fingerprint),
        mode=config.mode,
        seed=config.seed,
        fingerprint=fingerprint,
        gap=_gap_seconds(config),
        self_equivalent=_is_self_equivalent(config),
        dataset=str(manifest.root),
        train_accuracy=train_acc,
        test_accuracy=test_acc,
        per_class_accuracy=per_class,
        wall_time_s=time.perf_counter() - start,
    )


def transfer_eval(checkpoint, transfer_manifest: Manifest, config: ExperimentConfig) -> MetricsReport:
    """Linear evaluation carried out entirely on the transfer dataset."""
    return linear_eval(checkpoint, config, manifest=transfer_manifest)


def supervised_baseline(config: ExperimentConfig, run_dir=None, manifest: Manifest | None = None) -> MetricsReport:
    """End-to-end softmax training; the Table-1 supervised reference."""
    if config.mode != "supervised":
        raise ConfigError("supervised_baseline needs mode 'supervised'")
    start = time.perf_counter()
    manifest = manifest if manifest is not None else load_dataset(config)
    train_m, test_m = _split(config, manifest)
    train_records = _pool(train_m.records, config.rotation_only)
    test_records = _pool(test_m.records, config.rotation_only)
    cache = FrameImageCache(manifest.root)
    labels = _label_map(manifest)

    model = init_model(
        config.backbone,
        config.projection,
        derive_seed(config.seed, "model"),
        classifier=ClassifierSpec(num_classes=len(labels)),
    )
    _classifier_pass(
        model, config, train_records, manifest, cache, labels, config.pretrain_epochs, config.lr
    )

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        save_params(model.store, run_dir / "checkpoint.mvck")

    train_acc, _ = _accuracy(model, train_records, manifest, cache, labels, config)
    test_acc, per_class = _accuracy(model, test_records, manifest, cache, labels, config)
    fingerprint = config_fingerprint(config)
    return MetricsReport(
        run_id=_run_id(config, fingerprint),
        mode=config.mode,
        seed=config.seed,
        fingerprint=fingerprint,
        dataset=str(manifest.root),
        train_accuracy=train_acc,
        test_accuracy=test_acc,
        per_class_accuracy=per_class,
        wall_time_s=time.perf_counter() - start,
    )


def run_experiment(config: ExperimentConfig, run_dir=None, manifest: Manifest | None = None) -> MetricsReport:
    """One full run: pretrain + linear eval, or the supervised baseline."""
    if config.mode == "supervised":
        return supervised_baseline(config, run_dir=run_dir, manifest=manifest)
    model, pre = pretrain(config, run_dir=run_dir, manifest=manifest)
    ev = linear_eval(model, config, manifest=manifest)
    return replace(
        ev,
        pretrain_loss=pre.pretrain_loss,
        wall_time_s=pre.wall_time_s + ev.wall_time_s,
    )


def _sweep_cell(sub: ExperimentConfig, run_dir, manifest: Manifest) -> MetricsReport:
    """One sweep run; a failure becomes an error report, not an abort."""
    try:
        return run_experiment(sub, run_dir=run_dir, manifest=manifest)
    except Exception as err:
        fingerprint = config_fingerprint(sub)
        return MetricsReport(
            run_id=_run_id(sub, fingerprint),
            mode=sub.mode,
            seed=sub.seed,
            fingerprint=fingerprint,
            gap=_gap_seconds(sub),
            self_equivalent=_is_self_equivalent(sub),
            dataset=str(manifest.root),
            error=f"{type(err).__name__}: {err}",
        )


def run_gap_sweep(
    config: ExperimentConfig,
    gap_mode: str,
    run_root=None,
    manifest: Manifest | None = None,
    jobs: int = 1,
) -> list:
    """One full run per grid gap; failures are recorded, the sweep goes on.

    jobs > 1 fans the cells out to worker processes.  Every cell derives its
    randomness from its own config alone, so the parallel results are
    identical to the sequential ones.
    """
    if gap_mode not in ("fixed", "range"):
        raise ConfigError(f"gap mode must be 'fixed' or 'range', got {gap_mode!r}")
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    manifest = manifest if manifest is not None else load_dataset(config)
    cells = []
    for gap in gap_grid(manifest.fps):
        sub = replace(
            config,
            mode="simclr_transform",
            gap=GapSpec(gap_mode, gap, manifest.fps),
        )
        run_dir = None if run_root is None else Path(run_root) / f"gap_{gap:g}"
        cells.append((sub, run_dir))
    if jobs == 1:
        return [_sweep_cell(sub, run_dir, manifest) for sub, run_dir in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_sweep_cell, sub, run_dir, manifest) for sub, run_dir in cells]
        return [f.result() for f in futures]
