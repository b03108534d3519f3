"""Datasets: synthetic blob generation, disk I/O, stratified splits, resampling.

A dataset directory holds ``manifest.json`` plus two binary blobs:

* ``data.bin``  -- magic ``SCDS``, u32 sample count, u32 rank, u32 per-axis
  dims, then little-endian float32 samples in row-major order.
* ``labels.bin`` -- u32 count, then u32 class ids.

Sample values are quantised to float32 at generation time so save/load
round-trips are bitwise lossless.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DatasetLoadError, DegenerateInputError, SplitError

__all__ = [
    "Dataset",
    "SplitSpec",
    "DatasetInvariantWarning",
    "generate_blobs",
    "stratified_split",
    "ros_resample",
    "rus_subsample",
    "save_dataset",
    "load_dataset",
    "load_image_dataset",
]

DATA_MAGIC = b"SCDS"
SCHEMA_VERSION = 1


class DatasetInvariantWarning(UserWarning):
    """A loaded dataset violates a soft invariant (e.g. an empty declared class)."""


@dataclass
class Dataset:
    """Labeled samples with declared class structure.

    ``samples`` is (N, features) in vector mode or (N, C, H, W) in image
    mode; ``labels`` holds class ids below ``n_classes``.
    """

    samples: np.ndarray
    labels: np.ndarray
    mode: str
    n_classes: int
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.mode not in ("vector", "image"):
            raise ValueError(f"mode must be 'vector' or 'image', got {self.mode!r}")
        expected_ndim = 2 if self.mode == "vector" else 4
        if self.samples.ndim != expected_ndim:
            raise ValueError(f"{self.mode} samples must be {expected_ndim}-D, got shape {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError(f"labels shape {self.labels.shape} does not match {self.samples.shape[0]} samples")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must be in [0, {self.n_classes})")
        if self.class_names is None:
            self.class_names = tuple(f"class{i}" for i in range(self.n_classes))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.samples.shape[1:]

    @property
    def class_counts(self) -> dict[int, int]:
        counts = np.bincount(self.labels, minlength=self.n_classes)
        return {i: int(counts[i]) for i in range(self.n_classes)}

    @property
    def imbalance_ratio(self) -> float:
        counts = np.bincount(self.labels, minlength=self.n_classes)
        if counts.min() == 0:
            raise DegenerateInputError("imbalance ratio undefined: some class has no samples")
        return float(counts.max() / counts.min())

    def invariant_violations(self) -> list[str]:
        violations = []
        counts = self.class_counts
        for class_id, count in counts.items():
            if count == 0:
                violations.append(f"class {class_id} ({self.class_names[class_id]}) has no samples")
        return violations

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            samples=self.samples[indices],
            labels=self.labels[indices],
            mode=self.mode,
            n_classes=self.n_classes,
            class_names=self.class_names,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Per-class train fraction plus the shuffle seed."""

    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def generate_blobs(
    n_per_class: Sequence[int],
    dims: int = 2,
    class_separation: float = 3.0,
    cluster_spread: float = 1.0,
    seed: int = 0,
    shifted_minority_extra: int = 0,
    shift_distance: float | None = None,
) -> Dataset:
    """Gaussian clusters at fixed centers spaced ``class_separation`` apart.

    Class ``c`` is centred at ``c * class_separation`` along the first axis.
    ``shifted_minority_extra`` appends that many additional minority-class
    samples drawn from a center displaced by ``shift_distance`` (default:
    one ``class_separation``) along the second axis, to emulate mixing in
    out-of-distribution minority data.
    """
    counts = [int(c) for c in n_per_class]
    if not counts or any(c < 1 for c in counts):
        raise ValueError(f"all class counts must be >= 1, got {counts}")
    if dims < 1:
        raise ValueError(f"dims must be >= 1, got {dims}")
    if class_separation <= 0 or cluster_spread <= 0:
        raise ValueError("class_separation and cluster_spread must be positive")
    rng = np.random.default_rng(seed)
    chunks, labels = [], []
    for class_id, count in enumerate(counts):
        center = np.zeros(dims)
        center[0] = class_id * class_separation
        chunks.append(rng.normal(0.0, cluster_spread, size=(count, dims)) + center)
        labels.append(np.full(count, class_id))
    if shifted_minority_extra > 0:
        minority = int(np.argmin(counts))
        center = np.zeros(dims)
        center[0] = minority * class_separation
        offset = class_separation if shift_distance is None else shift_distance
        center[1 if dims > 1 else 0] += offset
        chunks.append(rng.normal(0.0, cluster_spread, size=(shifted_minority_extra, dims)) + center)
        labels.append(np.full(shifted_minority_extra, minority))
    samples = np.concatenate(chunks).astype(np.float32).astype(np.float64)
    return Dataset(samples=samples, labels=np.concatenate(labels), mode="vector", n_classes=len(counts))


def stratified_split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Split per class: floor(fraction * count) to train, the rest to test."""
    rng = np.random.default_rng(spec.seed)
    train_idx, test_idx = [], []
    for class_id in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == class_id)
        if len(idx) < 2:
            raise SplitError(f"class {class_id} has {len(idx)} sample(s); need at least 2 to split")
        idx = rng.permutation(idx)
        n_train = int(np.floor(spec.train_fraction * len(idx)))
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    return dataset.subset(np.concatenate(train_idx)), dataset.subset(np.concatenate(test_idx))


def ros_resample(train: Dataset, seed: int = 0) -> Dataset:
    """Random over-sampling: duplicate minority samples (with replacement)
    until every class matches the majority count."""
    counts = np.bincount(train.labels, minlength=train.n_classes)
    if train.n_classes < 2:
        raise ValueError("resampling needs at least 2 classes")
    majority = counts.max()
    rng = np.random.default_rng(seed)
    extra = []
    for class_id in range(train.n_classes):
        deficit = int(majority - counts[class_id])
        if deficit <= 0:
            continue
        idx = np.flatnonzero(train.labels == class_id)
        extra.append(rng.choice(idx, size=deficit, replace=True))
    if not extra:
        return train.subset(np.arange(len(train)))
    all_idx = np.concatenate([np.arange(len(train)), *extra])
    return train.subset(all_idx)


def rus_subsample(train: Dataset, seed: int = 0) -> Dataset:
    """Random under-sampling: keep only ``min(count)`` samples per class
    (without replacement)."""
    counts = np.bincount(train.labels, minlength=train.n_classes)
    if counts.min() < 1:
        raise DegenerateInputError("under-sampling needs every class nonempty")
    target = counts.min()
    rng = np.random.default_rng(seed)
    kept = []
    for class_id in range(train.n_classes):
        idx = np.flatnonzero(train.labels == class_id)
        if len(idx) > target:
            idx = rng.choice(idx, size=target, replace=False)
        kept.append(np.sort(idx))
    return train.subset(np.concatenate(kept))


# ---------------------------------------------------------------------------
# disk format


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_dataset(dataset: Dataset, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    shape = dataset.sample_shape
    data_blob = bytearray()
    data_blob += DATA_MAGIC
    data_blob += struct.pack("<I", len(dataset))
    data_blob += struct.pack("<I", len(shape))
    for dim in shape:
        data_blob += struct.pack("<I", dim)
    data_blob += dataset.samples.astype("<f4").tobytes()
    (directory / "data.bin").write_bytes(bytes(data_blob))

    labels_blob = struct.pack("<I", len(dataset)) + dataset.labels.astype("<u4").tobytes()
    (directory / "labels.bin").write_bytes(labels_blob)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "mode": dataset.mode,
        "shape": list(shape),
        "class_names": list(dataset.class_names),
        "counts": [dataset.class_counts[i] for i in range(dataset.n_classes)],
        "files": [
            {"name": "data.bin", "sha256": _sha256(directory / "data.bin")},
            {"name": "labels.bin", "sha256": _sha256(directory / "labels.bin")},
        ],
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def _read_manifest(directory: Path) -> dict:
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DatasetLoadError(f"{manifest_path}: manifest not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise DatasetLoadError(f"{manifest_path}: invalid JSON ({err})") from err
    required = {"schema_version", "mode", "shape", "class_names", "counts", "files"}
    missing = required - manifest.keys()
    if missing:
        raise DatasetLoadError(f"{manifest_path}: missing keys {sorted(missing)}")
    if manifest["schema_version"] != SCHEMA_VERSION:
        raise DatasetLoadError(f"{manifest_path}: unsupported schema_version {manifest['schema_version']}")
    return manifest


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset (directory or its manifest.json path), validating blobs
    against the manifest."""
    directory = Path(path)
    if directory.name == "manifest.json":
        directory = directory.parent
    manifest = _read_manifest(directory)

    for entry in manifest["files"]:
        blob_path = directory / entry["name"]
        if not blob_path.exists():
            raise DatasetLoadError(f"{blob_path}: listed in manifest but missing")
        digest = _sha256(blob_path)
        if digest != entry["sha256"]:
            raise DatasetLoadError(f"{blob_path}: checksum mismatch (manifest {entry['sha256'][:12]}..., file {digest[:12]}...)")

    data_path = directory / "data.bin"
    blob = data_path.read_bytes()
    if blob[:4] != DATA_MAGIC:
        raise DatasetLoadError(f"{data_path}: bad magic at offset 0: {blob[:4]!r}")
    if len(blob) < 12:
        raise DatasetLoadError(f"{data_path}: truncated header ({len(blob)} bytes)")
    (count,) = struct.unpack_from("<I", blob, 4)
    (rank,) = struct.unpack_from("<I", blob, 8)
    if rank < 1 or rank > 8 or len(blob) < 12 + 4 * rank:
        raise DatasetLoadError(f"{data_path}: implausible rank {rank} at offset 8")
    dims = struct.unpack_from(f"<{rank}I", blob, 12)
    offset = 12 + 4 * rank
    if list(dims) != list(manifest["shape"]):
        raise DatasetLoadError(f"{data_path}: shape {list(dims)} disagrees with manifest {manifest['shape']}")
    expected = offset + 4 * count * int(np.prod(dims, dtype=np.int64))
    if len(blob) != expected:
        raise DatasetLoadError(f"{data_path}: expected {expected} bytes, found {len(blob)} (offset {offset})")
    samples = np.frombuffer(blob, dtype="<f4", offset=offset).reshape((count, *dims)).astype(np.float64)

    labels_path = directory / "labels.bin"
    lblob = labels_path.read_bytes()
    (lcount,) = struct.unpack_from("<I", lblob, 0)
    if lcount != count:
        raise DatasetLoadError(f"{labels_path}: label count {lcount} disagrees with {count} samples (offset 0)")
    if len(lblob) != 4 + 4 * count:
        raise DatasetLoadError(f"{labels_path}: expected {4 + 4 * count} bytes, found {len(lblob)}")
    labels = np.frombuffer(lblob, dtype="<u4", offset=4).astype(np.int64)

    n_classes = len(manifest["class_names"])
    if count == 0:
        raise DatasetLoadError(f"{data_path}: dataset is empty")
    if labels.max() >= n_classes:
        bad = int(np.argmax(labels >= n_classes))
        raise DatasetLoadError(f"{labels_path}: label {labels[bad]} out of range at offset {4 + 4 * bad}")
    declared = list(manifest["counts"])
    observed = np.bincount(labels, minlength=n_classes).tolist()
    if declared != observed:
        raise DatasetLoadError(f"{labels_path}: manifest counts {declared} disagree with observed {observed}")

    mode = manifest["mode"]
    if mode == "image" and (samples.min() < 0.0 or samples.max() > 1.0):
        raise DatasetLoadError(f"{data_path}: image values must lie in [0, 1]")

    dataset = Dataset(
        samples=samples,
        labels=labels,
        mode=mode,
        n_classes=n_classes,
        class_names=tuple(manifest["class_names"]),
    )
    for violation in dataset.invariant_violations():
        warnings.warn(violation, DatasetInvariantWarning, stacklevel=2)
    return dataset


def load_image_dataset(path: str | Path) -> Dataset:
    """Load a dataset that must be in image mode."""
    dataset = load_dataset(path)
    if dataset.mode != "image":
        raise DatasetLoadError(f"{path}: expected an image dataset, found mode {dataset.mode!r}")
    return dataset
