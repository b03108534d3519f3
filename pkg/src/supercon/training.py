"""The two-stage training procedure and the six comparison strategies.

Stage 1 (representation training) optimizes the extractor and projection
head under the supervised contrastive loss on multiview batches. Stage 2
(classifier fine-tuning) freezes both and trains only the classifier with
focal or cross-entropy loss. The single-stage baselines (Vanilla, FocalLoss,
ROS, RUS) share one classification loop.

Everything is a pure function of (config, data, seed): model init, epoch
shuffling and augmentation draw from per-stage generators derived from the
run seed, so identical configs reproduce identical reports bit for bit.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .augment import AugmentConfig, build_multiview_batch, augment
from .data import Dataset, ros_resample, rus_subsample
from .exceptions import (
    ConfigError,
    DegenerateBatchError,
    FreezeContractError,
    InfeasibleStrategyError,
)
from .losses import FocalConfig, SupConConfig, cross_entropy, focal_loss, supcon_loss
from .metrics import MetricsReport, evaluate_predictions, project_2d
from .networks import ArchitectureConfig, ModelStack, build_model_stack, checkpoint_bytes
from .tensor import Tensor

__all__ = [
    "STRATEGIES",
    "TWO_STAGE_STRATEGIES",
    "TrainConfig",
    "TrainTrace",
    "RunReport",
    "build_stack_for_config",
    "train_representation",
    "finetune_classifier",
    "run_strategy",
    "fit_strategy",
    "cosine_separation",
]

STRATEGIES = ("Vanilla", "FocalLoss", "ROS", "RUS", "SuperConCE", "SuperCon")
TWO_STAGE_STRATEGIES = ("SuperConCE", "SuperCon")

# stream ids so each phase gets an independent generator from the run seed
_INIT_STREAM, _STAGE1_STREAM, _STAGE2_STREAM, _PRETRAIN_STREAM = 0, 1, 2, 3


@dataclass(frozen=True)
class TrainConfig:
    """Every hyperparameter of a training run."""

    strategy: str = "SuperCon"
    batch_size: int = 128
    stage1_epochs: int | None = None  # required for two-stage strategies; no silent default
    stage2_epochs: int = 10
    stage1_lr: float = 0.01
    stage2_lr: float = 5e-4
    supcon: SupConConfig = field(default_factory=SupConConfig)
    focal: FocalConfig = field(default_factory=FocalConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    seed: int = 0
    stage2_augment: bool = False
    rus_phase1_epochs: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.stage1_lr <= 0 or self.stage2_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.stage2_epochs < 1:
            raise ConfigError(f"stage2_epochs must be >= 1, got {self.stage2_epochs}")
        if self.strategy in TWO_STAGE_STRATEGIES:
            if self.stage1_epochs is None:
                raise ConfigError(f"{self.strategy} requires an explicit stage1_epochs")
            if self.stage1_epochs < 1:
                raise ConfigError(f"stage1_epochs must be >= 1, got {self.stage1_epochs}")
            if not self.augment.transforms:
                raise ConfigError("stage 1 needs at least one enabled augmentation transform")

    @property
    def classification_epochs(self) -> int:
        """Epoch budget of every classification phase.

        Single-stage baselines train exactly this long; two-stage strategies
        spend it on the classifier after their representation phase.
        """
        return self.stage2_epochs

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "batch_size": self.batch_size,
            "stage1_epochs": self.stage1_epochs,
            "stage2_epochs": self.stage2_epochs,
            "stage1_lr": self.stage1_lr,
            "stage2_lr": self.stage2_lr,
            "supcon": dataclasses.asdict(self.supcon),
            "focal": dataclasses.asdict(self.focal),
            "augment": dataclasses.asdict(self.augment) | {"transforms": list(self.augment.transforms)},
            "architecture": self.architecture.to_dict(),
            "seed": self.seed,
            "stage2_augment": self.stage2_augment,
            "rus_phase1_epochs": self.rus_phase1_epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "supcon" in d:
            d["supcon"] = SupConConfig(**d["supcon"])
        if "focal" in d:
            d["focal"] = FocalConfig(**d["focal"])
        if "augment" in d:
            aug = dict(d["augment"])
            aug["transforms"] = tuple(aug.get("transforms", ()))
            if "probabilities" in aug and aug["probabilities"] is None:
                aug.pop("probabilities")
            d["augment"] = AugmentConfig(**aug)
        if "architecture" in d:
            arch = dict(ArchitectureConfig().to_dict())
            arch.update(d["architecture"])
            d["architecture"] = ArchitectureConfig.from_dict(arch)
        return cls(**d)


@dataclass
class TrainTrace:
    """Per-stage record: losses, update counts, timing, parameter checksums."""

    stage: str
    loss_kind: str
    epochs: int
    learning_rate: float
    dataset_size: int
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    wall_time_seconds: float = 0.0
    checksums: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunReport:
    """The full outcome of one strategy run: metrics, curves, embeddings."""

    strategy: str
    seed: int
    stage1_epochs: int | None
    config: dict
    traces: list[TrainTrace]
    metrics: MetricsReport
    minority_class_id: int
    embeddings: dict[str, np.ndarray]
    checkpoints: dict[str, bytes]
    checksums: dict[str, str]
    notes: list[str]
    separation: dict[str, float] | None = None


def build_stack_for_config(cfg: TrainConfig, train: Dataset) -> ModelStack:
    """Fresh model stack initialised from the run seed."""
    rng = np.random.default_rng([cfg.seed, _INIT_STREAM])
    return build_model_stack(cfg.architecture, train.sample_shape, train.n_classes, rng, seed=cfg.seed)


def resolve_minority_class(focal: FocalConfig, train: Dataset) -> int:
    if focal.minority_class_id is not None:
        if not 0 <= focal.minority_class_id < train.n_classes:
            raise ConfigError(f"minority_class_id {focal.minority_class_id} out of range")
        return focal.minority_class_id
    counts = np.bincount(train.labels, minlength=train.n_classes)
    return int(np.argmin(counts))


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches covering all samples; the partial final batch is kept."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train_representation(stack: ModelStack, train: Dataset, cfg: TrainConfig) -> TrainTrace:
    """Stage 1: optimize extractor + projection head under the contrastive loss."""
    if len(np.unique(train.labels)) < 2:
        raise ConfigError("representation training needs at least 2 classes present")
    if cfg.stage1_epochs is None:
        raise ConfigError("stage1_epochs must be set for representation training")
    rng = np.random.default_rng([cfg.seed, _STAGE1_STREAM])
    params = stack.trainable_parameters(("extractor", "mapper"))
    trace = TrainTrace(
        stage="stage1",
        loss_kind="supcon",
        epochs=cfg.stage1_epochs,
        learning_rate=cfg.stage1_lr,
        dataset_size=len(train),
        seed=cfg.seed,
    )
    started = time.perf_counter()
    for epoch in range(cfg.stage1_epochs):
        total, weight = 0.0, 0
        for batch_index, idx in enumerate(_epoch_batches(len(train), cfg.batch_size, rng)):
            batch = build_multiview_batch(train.samples[idx], train.labels[idx], cfg.augment, rng)
            try:
                z = stack.embed(Tensor(batch.inputs))
                loss = supcon_loss(z, batch.labels, cfg.supcon)
            except DegenerateBatchError as err:
                raise DegenerateBatchError(f"epoch {epoch}, batch {batch_index}: {err}") from err
            T.backward(loss)
            T.sgd_step(params, cfg.stage1_lr)
            total += loss.item() * len(idx)
            weight += len(idx)
            trace.steps += 1
        trace.epoch_losses.append(total / weight)
    trace.wall_time_seconds = time.perf_counter() - started
    trace.checksums = stack.checksums()
    return trace


def _classification_phase(
    stack: ModelStack,
    dataset: Dataset,
    cfg: TrainConfig,
    *,
    stage: str,
    loss_kind: str,
    epochs: int,
    learning_rate: float,
    components: tuple[str, ...],
    rng: np.random.Generator,
    minority_class_id: int,
    augment_inputs: bool = False,
) -> TrainTrace:
    focal_cfg = dataclasses.replace(cfg.focal, minority_class_id=minority_class_id)
    params = stack.trainable_parameters(components)
    if not params:
        raise FreezeContractError(f"{stage}: every requested component is frozen")
    trace = TrainTrace(
        stage=stage,
        loss_kind=loss_kind,
        epochs=epochs,
        learning_rate=learning_rate,
        dataset_size=len(dataset),
        seed=cfg.seed,
    )
    started = time.perf_counter()
    for _ in range(epochs):
        total, weight = 0.0, 0
        for idx in _epoch_batches(len(dataset), cfg.batch_size, rng):
            inputs = dataset.samples[idx]
            if augment_inputs:
                inputs = np.stack([augment(sample, cfg.augment, rng) for sample in inputs])
            logits = stack.logits(Tensor(inputs))
            if loss_kind == "focal":
                loss = focal_loss(logits, dataset.labels[idx], focal_cfg)
            else:
                loss = cross_entropy(logits, dataset.labels[idx])
            T.backward(loss)
            T.sgd_step(params, learning_rate)
            total += loss.item() * len(idx)
            weight += len(idx)
            trace.steps += 1
        trace.epoch_losses.append(total / weight)
    trace.wall_time_seconds = time.perf_counter() - started
    trace.checksums = stack.checksums()
    return trace


def finetune_classifier(stack: ModelStack, train: Dataset, cfg: TrainConfig) -> TrainTrace:
    """Stage 2: train only the classifier on frozen extractor features."""
    if cfg.strategy in TWO_STAGE_STRATEGIES:
        if not (stack.is_frozen("extractor") and stack.is_frozen("mapper")):
            raise FreezeContractError("stage 2 requires the extractor and mapper to be frozen")
    minority = resolve_minority_class(cfg.focal, train)
    loss_kind = "focal" if cfg.strategy == "SuperCon" else "cross_entropy"
    return _classification_phase(
        stack,
        train,
        cfg,
        stage="stage2",
        loss_kind=loss_kind,
        epochs=cfg.stage2_epochs,
        learning_rate=cfg.stage2_lr,
        components=("classifier",),
        rng=np.random.default_rng([cfg.seed, _STAGE2_STREAM]),
        minority_class_id=minority,
        augment_inputs=cfg.stage2_augment,
    )


def fit_strategy(cfg: TrainConfig, train: Dataset) -> tuple[ModelStack, list[TrainTrace], dict[str, bytes], list[str]]:
    """Train a model stack under the configured strategy.

    Returns the trained stack, the per-phase traces, serialized checkpoints
    ("stage1" for two-stage strategies plus "final"), and run notes.
    """
    notes = ["parameters initialised randomly; no pretrained backbone is used"]
    minority = resolve_minority_class(cfg.focal, train)
    stack = build_stack_for_config(cfg, train)

    traces: list[TrainTrace] = []
    checkpoints: dict[str, bytes] = {}

    if cfg.strategy in ("Vanilla", "FocalLoss", "ROS"):
        dataset = train
        if cfg.strategy == "ROS":
            dataset = ros_resample(train, seed=cfg.seed)
            notes.append(f"training on an over-sampled set of {len(dataset)} samples")
        traces.append(
            _classification_phase(
                stack,
                dataset,
                cfg,
                stage="train",
                loss_kind="focal" if cfg.strategy == "FocalLoss" else "cross_entropy",
                epochs=cfg.classification_epochs,
                learning_rate=cfg.stage1_lr,
                components=("extractor", "classifier"),
                rng=np.random.default_rng([cfg.seed, _STAGE2_STREAM]),
                minority_class_id=minority,
            )
        )
    elif cfg.strategy == "RUS":
        counts = np.bincount(train.labels, minlength=train.n_classes)
        if counts.min() < cfg.batch_size:
            raise InfeasibleStrategyError(
                f"RUS infeasible: minority class has {counts.min()} samples, fewer than "
                f"batch_size {cfg.batch_size}; the balanced pre-training set would be too small"
            )
        subsampled = rus_subsample(train, seed=cfg.seed)
        phase1_epochs = cfg.rus_phase1_epochs if cfg.rus_phase1_epochs is not None else cfg.stage2_epochs
        pre_rng = np.random.default_rng([cfg.seed, _PRETRAIN_STREAM])
        traces.append(
            _classification_phase(
                stack,
                subsampled,
                cfg,
                stage="rus_pretrain",
                loss_kind="cross_entropy",
                epochs=phase1_epochs,
                learning_rate=cfg.stage1_lr,
                components=("extractor", "classifier"),
                rng=pre_rng,
                minority_class_id=minority,
            )
        )
        traces.append(
            _classification_phase(
                stack,
                train,
                cfg,
                stage="train",
                loss_kind="cross_entropy",
                epochs=cfg.classification_epochs,
                learning_rate=cfg.stage1_lr,
                components=("extractor", "classifier"),
                rng=np.random.default_rng([cfg.seed, _STAGE2_STREAM]),
                minority_class_id=minority,
            )
        )
    else:  # SuperConCE / SuperCon
        traces.append(train_representation(stack, train, cfg))
        checkpoints["stage1"] = checkpoint_bytes(stack)
        stack.set_frozen("extractor", True)
        stack.set_frozen("mapper", True)
        traces.append(finetune_classifier(stack, train, cfg))

    checkpoints["final"] = checkpoint_bytes(stack)
    return stack, traces, checkpoints, notes


def _batched_forward(stack: ModelStack, samples: np.ndarray, fn, batch: int = 512) -> np.ndarray:
    outputs = [fn(stack, samples[start : start + batch]) for start in range(0, len(samples), batch)]
    return np.concatenate(outputs)


def predict_proba(stack: ModelStack, samples: np.ndarray) -> np.ndarray:
    return _batched_forward(stack, samples, lambda s, x: s.predict_proba(Tensor(x)))


def extract_features(stack: ModelStack, samples: np.ndarray) -> np.ndarray:
    return _batched_forward(stack, samples, lambda s, x: s.features(Tensor(x)).data)


def extract_embeddings(stack: ModelStack, samples: np.ndarray) -> np.ndarray:
    return _batched_forward(stack, samples, lambda s, x: s.embed(Tensor(x)).data)


def cosine_separation(embeddings: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    """Mean within-class vs between-class cosine similarity of unit embeddings."""
    z = np.asarray(embeddings, dtype=np.float64)
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    labels = np.asarray(labels)
    sims = z @ z.T
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    intra = float(sims[same & off_diag].mean())
    inter = float(sims[~same].mean())
    return {"intra_class_cosine": intra, "inter_class_cosine": inter, "gap": intra - inter}


def run_strategy(cfg: TrainConfig, train: Dataset, test: Dataset) -> RunReport:
    """Train under ``cfg`` and evaluate on ``test``, producing a full report."""
    if train.n_classes != test.n_classes or train.sample_shape != test.sample_shape:
        raise ConfigError("train and test datasets disagree on shape or class count")
    minority = resolve_minority_class(cfg.focal, train)
    stack, traces, checkpoints, notes = fit_strategy(cfg, train)

    probs = predict_proba(stack, test.samples)
    predictions = probs.argmax(axis=1)
    metrics = evaluate_predictions(test.labels, predictions, probs[:, minority], test.n_classes, minority)

    reps = extract_features(stack, test.samples)
    embeddings = {
        "labels": test.labels.copy(),
        "rep": reps,
        "projection": project_2d(reps),
    }
    separation = None
    if cfg.strategy in TWO_STAGE_STRATEGIES:
        z = extract_embeddings(stack, test.samples)
        embeddings["z"] = z
        separation = cosine_separation(z, test.labels)

    return RunReport(
        strategy=cfg.strategy,
        seed=cfg.seed,
        stage1_epochs=cfg.stage1_epochs,
        config=cfg.to_dict(),
        traces=traces,
        metrics=metrics,
        minority_class_id=minority,
        embeddings=embeddings,
        checkpoints=checkpoints,
        checksums=stack.checksums(),
        notes=notes,
        separation=separation,
    )
