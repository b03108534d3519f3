"""Model components: feature extractor, projection head, classifier.

The three parts live in a ``ModelStack`` so training code can freeze or
update them independently. Architectures are deliberately small and config
swappable: a dense stack for vector data, a two-conv stack for images.
Checkpoints serialize to a single binary file (magic ``SCKP``).
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DatasetLoadError, ShapeError
from .tensor import Tensor

__all__ = [
    "ArchitectureConfig",
    "Dense",
    "Conv",
    "FeatureExtractor",
    "MappingModule",
    "Classifier",
    "ModelStack",
    "build_model_stack",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_bytes",
]

CHECKPOINT_MAGIC = b"SCKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchitectureConfig:
    """Layer widths for all three components.

    ``hidden`` drives the vector-mode extractor; ``conv_channels`` plus
    ``conv_dense`` drive the image-mode extractor. The projection output
    stays small by default because desk-scale feature dimensions are small;
    larger values (e.g. 128) are honoured when configured.
    """

    hidden: tuple[int, ...] = (64, 32)
    conv_channels: tuple[int, ...] = (8, 16)
    conv_kernel: int = 3
    conv_stride: int = 2
    conv_padding: int = 1
    conv_dense: int = 64
    projection_dim: int = 16
    projection_hidden: int | None = None

    def __post_init__(self):
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden}")
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ConfigError(f"conv channels must be positive, got {self.conv_channels}")
        if self.projection_dim < 1:
            raise ConfigError(f"projection_dim must be positive, got {self.projection_dim}")

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "conv_channels": list(self.conv_channels),
            "conv_kernel": self.conv_kernel,
            "conv_stride": self.conv_stride,
            "conv_padding": self.conv_padding,
            "conv_dense": self.conv_dense,
            "projection_dim": self.projection_dim,
            "projection_hidden": self.projection_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        return cls(
            hidden=tuple(d["hidden"]),
            conv_channels=tuple(d["conv_channels"]),
            conv_kernel=d["conv_kernel"],
            conv_stride=d["conv_stride"],
            conv_padding=d["conv_padding"],
            conv_dense=d["conv_dense"],
            projection_dim=d["projection_dim"],
            projection_hidden=d.get("projection_hidden"),
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    """Affine layer ``x @ W + b``."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, name: str):
        self.name = name
        self.weight = Tensor(_glorot(rng, n_in, n_out, (n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor, frozen: bool = False) -> Tensor:
        w = self.weight.detach() if frozen else self.weight
        b = self.bias.detach() if frozen else self.bias
        return T.add(T.matmul(x, w), b)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class Conv:
    """Square-kernel strided convolution."""

    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int, stride: int, padding: int, name: str):
        self.name = name
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        fan_out = out_ch * kernel * kernel
        self.weight = Tensor(_glorot(rng, fan_in, fan_out, (out_ch, in_ch, kernel, kernel)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x: Tensor, frozen: bool = False) -> Tensor:
        w = self.weight.detach() if frozen else self.weight
        b = self.bias.detach() if frozen else self.bias
        return T.conv2d(x, w, b, stride=self.stride, padding=self.padding)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class FeatureExtractor:
    """Encodes raw samples into feature representations.

    Vector mode is a relu MLP over ``hidden``; image mode is the conv stack
    followed by one dense layer. The output dimension is ``output_dim``.
    """

    def __init__(self, rng: np.random.Generator, arch: ArchitectureConfig, input_shape: tuple[int, ...]):
        self.input_shape = tuple(input_shape)
        self.frozen = False
        self._convs: list[Conv] = []
        self._denses: list[Dense] = []
        if len(input_shape) == 1:
            self.mode = "vector"
            n_in = input_shape[0]
            for i, width in enumerate(arch.hidden):
                self._denses.append(Dense(rng, n_in, width, f"extractor.dense{i}"))
                n_in = width
            self.output_dim = n_in
        elif len(input_shape) == 3:
            self.mode = "image"
            channels, h, w = input_shape
            for i, out_ch in enumerate(arch.conv_channels):
                self._convs.append(
                    Conv(rng, channels, out_ch, arch.conv_kernel, arch.conv_stride, arch.conv_padding, f"extractor.conv{i}")
                )
                h = _conv_out(h, arch.conv_kernel, arch.conv_stride, arch.conv_padding)
                w = _conv_out(w, arch.conv_kernel, arch.conv_stride, arch.conv_padding)
                channels = out_ch
            if h < 1 or w < 1:
                raise ConfigError(f"input {input_shape} collapses under the conv stack")
            self._flat_dim = channels * h * w
            self._denses.append(Dense(rng, self._flat_dim, arch.conv_dense, "extractor.dense0"))
            self.output_dim = arch.conv_dense
        else:
            raise ShapeError(f"extractor input must be (features,) or (C, H, W), got {input_shape}")

    def forward(self, x: Tensor) -> Tensor:
        expected = (x.shape[0],) + self.input_shape
        if x.shape != expected:
            raise ShapeError(f"extractor expected batch shape {expected}, got {x.shape}")
        out = x
        for conv in self._convs:
            out = T.relu(conv(out, self.frozen))
        if self._convs:
            out = T.reshape(out, (x.shape[0], self._flat_dim))
        for dense in self._denses:
            out = T.relu(dense(out, self.frozen))
        return out

    def parameters(self) -> list[tuple[str, Tensor]]:
        params = []
        for layer in [*self._convs, *self._denses]:
            params.extend(layer.parameters())
        return params


class MappingModule:
    """Projects features into the low-dimensional space used by the contrastive loss."""

    def __init__(self, rng: np.random.Generator, input_dim: int, output_dim: int, hidden_dim: int | None = None):
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.frozen = False
        hidden = hidden_dim if hidden_dim is not None else input_dim
        self._hidden = Dense(rng, input_dim, hidden, "mapper.dense0")
        self._out = Dense(rng, hidden, output_dim, "mapper.dense1")

    def project(self, rep: Tensor) -> Tensor:
        """Map features to unit-norm embeddings (rows normalized to 1)."""
        if rep.data.ndim != 2 or rep.shape[1] != self.input_dim:
            raise ShapeError(f"mapper expected (batch, {self.input_dim}), got {rep.shape}")
        z = self._out(T.relu(self._hidden(rep, self.frozen)), self.frozen)
        return T.l2_normalize(z, axis=-1)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return self._hidden.parameters() + self._out.parameters()


class Classifier:
    """Linear head producing one logit per class from extractor features."""

    def __init__(self, rng: np.random.Generator, input_dim: int, n_classes: int):
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.frozen = False
        self._dense = Dense(rng, input_dim, n_classes, "classifier.dense0")

    def logits(self, rep: Tensor) -> Tensor:
        if rep.data.ndim != 2 or rep.shape[1] != self.input_dim:
            raise ShapeError(f"classifier expected (batch, {self.input_dim}), got {rep.shape}")
        return self._dense(rep, self.frozen)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return self._dense.parameters()


_COMPONENTS = ("extractor", "mapper", "classifier")


@dataclass
class ModelStack:
    """The full model: extractor, projection head, classifier, freeze flags."""

    extractor: FeatureExtractor
    mapper: MappingModule
    classifier: Classifier
    architecture: ArchitectureConfig
    input_shape: tuple[int, ...]
    n_classes: int
    seed: int | None = None
    _frozen: dict = field(default_factory=lambda: {name: False for name in _COMPONENTS})

    def component(self, name: str):
        if name not in _COMPONENTS:
            raise ValueError(f"unknown component {name!r}; expected one of {_COMPONENTS}")
        return getattr(self, name)

    def set_frozen(self, name: str, frozen: bool) -> None:
        """Freeze or thaw a component; frozen parameters record no gradients."""
        self.component(name).frozen = bool(frozen)
        self._frozen[name] = bool(frozen)

    def is_frozen(self, name: str) -> bool:
        return self._frozen[name]

    def features(self, x: np.ndarray | Tensor) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=np.float64))
        return self.extractor.forward(x)

    def embed(self, x: np.ndarray | Tensor) -> Tensor:
        """Unit-norm contrastive embeddings for a batch of raw samples."""
        return self.mapper.project(self.features(x))

    def logits(self, x: np.ndarray | Tensor) -> Tensor:
        return self.classifier.logits(self.features(x))

    def predict_proba(self, x: np.ndarray | Tensor) -> np.ndarray:
        return T.softmax(self.logits(x), axis=-1).data

    def parameters(self, components: tuple[str, ...] = _COMPONENTS) -> list[tuple[str, Tensor]]:
        params = []
        for name in components:
            params.extend(self.component(name).parameters())
        return params

    def trainable_parameters(self, components: tuple[str, ...]) -> list[Tensor]:
        """Parameters of the requested components, skipping frozen ones."""
        out = []
        for name in components:
            if not self._frozen[name]:
                out.extend(p for _, p in self.component(name).parameters())
        return out

    def checksums(self) -> dict[str, str]:
        """sha256 over each component's parameter bytes, in declaration order."""
        sums = {}
        for name in _COMPONENTS:
            h = hashlib.sha256()
            for _, p in self.component(name).parameters():
                h.update(np.ascontiguousarray(p.data).tobytes())
            sums[name] = h.hexdigest()
        return sums


def build_model_stack(
    arch: ArchitectureConfig,
    input_shape: tuple[int, ...],
    n_classes: int,
    rng: np.random.Generator,
    seed: int | None = None,
) -> ModelStack:
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    extractor = FeatureExtractor(rng, arch, input_shape)
    mapper = MappingModule(rng, extractor.output_dim, arch.projection_dim, arch.projection_hidden)
    classifier = Classifier(rng, extractor.output_dim, n_classes)
    return ModelStack(
        extractor=extractor,
        mapper=mapper,
        classifier=classifier,
        architecture=arch,
        input_shape=tuple(input_shape),
        n_classes=n_classes,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# checkpoint serialization


def checkpoint_bytes(stack: ModelStack) -> bytes:
    params = stack.parameters()
    header = {
        "architecture": stack.architecture.to_dict(),
        "input_shape": list(stack.input_shape),
        "n_classes": stack.n_classes,
        "freeze": dict(stack._frozen),
        "seed": stack.seed,
        "parameters": [{"name": name, "shape": list(p.shape)} for name, p in params],
    }
    header_blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", CHECKPOINT_VERSION))
    buf.write(struct.pack("<I", len(header_blob)))
    buf.write(header_blob)
    for _, p in params:
        buf.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(stack: ModelStack, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(stack))


def load_checkpoint(path: str | Path) -> ModelStack:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DatasetLoadError(f"{path}: bad checkpoint magic at offset 0: {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DatasetLoadError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<I", blob, 6)
    header_end = 10 + header_len
    if header_end > len(blob):
        raise DatasetLoadError(f"{path}: truncated header (needs {header_end} bytes, file has {len(blob)})")
    header = json.loads(blob[10:header_end].decode("utf-8"))

    arch = ArchitectureConfig.from_dict(header["architecture"])
    rng = np.random.default_rng(0)  # placeholder init; parameters overwritten below
    stack = build_model_stack(arch, tuple(header["input_shape"]), header["n_classes"], rng, seed=header.get("seed"))

    offset = header_end
    by_name = dict(stack.parameters())
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(blob):
            raise DatasetLoadError(f"{path}: truncated parameter block {entry['name']!r} at offset {offset}")
        param = by_name.get(entry["name"])
        if param is None or param.shape != shape:
            raise DatasetLoadError(f"{path}: parameter {entry['name']!r} does not match the architecture")
        param.data[...] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
        offset = end
    if offset != len(blob):
        raise DatasetLoadError(f"{path}: {len(blob) - offset} trailing bytes after parameters")

    for name, frozen in header["freeze"].items():
        stack.set_frozen(name, frozen)
    return stack
