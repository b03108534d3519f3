"""Random view generation for stage-1 representation training.

Image samples are (C, H, W) arrays with values in [0, 1]; vector samples are
1-D feature arrays. An ``AugmentConfig`` selects which transforms are enabled
and how strong they are; ``build_multiview_batch`` pairs every original with
exactly one freshly augmented view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "IMAGE_TRANSFORMS",
    "VECTOR_TRANSFORMS",
    "AugmentConfig",
    "MultiviewBatch",
    "augment",
    "build_multiview_batch",
]

IMAGE_TRANSFORMS = ("horizontal_flip", "grayscale", "color_distortion", "gaussian_blur", "gaussian_noise")
# Image transforms do not apply to plain feature vectors; vector datasets
# fall back to additive noise plus per-feature scaling jitter.
VECTOR_TRANSFORMS = ("gaussian_noise", "feature_scaling")

DEFAULT_PROBABILITY = 0.5


@dataclass(frozen=True)
class AugmentConfig:
    """Which transforms run, with what probability, and how strongly."""

    transforms: tuple[str, ...] = ("horizontal_flip", "grayscale", "color_distortion", "gaussian_blur")
    probabilities: dict[str, float] = field(default_factory=dict)
    jitter_strength: float = 0.4
    blur_radius: int = 1
    blur_sigma: float = 0.5
    noise_sigma: float = 0.1
    scale_jitter: float = 0.1

    def __post_init__(self):
        unknown = set(self.transforms) - set(IMAGE_TRANSFORMS)
        if unknown:
            raise ConfigError(f"unknown transforms: {sorted(unknown)}")
        for name, p in self.probabilities.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability for {name!r} must be in [0, 1], got {p}")
        if self.jitter_strength < 0:
            raise ConfigError(f"jitter_strength must be >= 0, got {self.jitter_strength}")
        if self.blur_radius < 1:
            raise ConfigError(f"blur_radius must be >= 1, got {self.blur_radius}")
        if self.blur_sigma <= 0:
            raise ConfigError(f"blur_sigma must be > 0, got {self.blur_sigma}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.scale_jitter < 0:
            raise ConfigError(f"scale_jitter must be >= 0, got {self.scale_jitter}")

    def probability(self, name: str) -> float:
        return self.probabilities.get(name, DEFAULT_PROBABILITY)


@dataclass(frozen=True)
class MultiviewBatch:
    """N originals followed by their N views; labels duplicated to match."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] % 2 != 0:
            raise ValueError("multiview batch must have an even sample count")
        n = self.inputs.shape[0] // 2
        if not np.array_equal(self.labels[:n], self.labels[n:]):
            raise ValueError("view labels must mirror original labels")


def _gaussian_kernel(radius: int, sigma: float) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def _blur(x: np.ndarray, radius: int, sigma: float) -> np.ndarray:
    kernel = _gaussian_kernel(radius, sigma)
    padded = np.pad(x, ((0, 0), (radius, radius), (radius, radius)), mode="edge")
    # separable convolution: rows then columns
    rows = np.zeros_like(padded)
    for k, w in enumerate(kernel):
        rows += w * np.roll(padded, radius - k, axis=1)
    out = np.zeros_like(padded)
    for k, w in enumerate(kernel):
        out += w * np.roll(rows, radius - k, axis=2)
    return out[:, radius:-radius, radius:-radius]


def _augment_image(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    channels = x.shape[0]
    if channels not in (1, 3):
        raise ConfigError(f"image augmentation supports 1 or 3 channels, got {channels}")
    out = x.copy()

    if "horizontal_flip" in cfg.transforms and rng.random() < cfg.probability("horizontal_flip"):
        out = out[:, :, ::-1]

    if "grayscale" in cfg.transforms and rng.random() < cfg.probability("grayscale"):
        out = np.repeat(out.mean(axis=0, keepdims=True), channels, axis=0)

    if "color_distortion" in cfg.transforms and rng.random() < cfg.probability("color_distortion"):
        s = cfg.jitter_strength
        brightness, contrast, saturation = rng.uniform(1.0 - s, 1.0 + s, size=3)
        out = out * brightness
        mean = out.mean(axis=(1, 2), keepdims=True)
        out = (out - mean) * contrast + mean
        gray = out.mean(axis=0, keepdims=True)
        out = gray + (out - gray) * saturation
        out = np.clip(out, 0.0, 1.0)

    if "gaussian_blur" in cfg.transforms and rng.random() < cfg.probability("gaussian_blur"):
        out = _blur(out, cfg.blur_radius, cfg.blur_sigma)

    if "gaussian_noise" in cfg.transforms and rng.random() < cfg.probability("gaussian_noise"):
        out = out + rng.normal(0.0, cfg.noise_sigma, size=out.shape)

    return np.clip(out, 0.0, 1.0)


def _augment_vector(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    if not cfg.transforms:
        return x.copy()
    out = x.copy()
    if rng.random() < cfg.probability("gaussian_noise"):
        out = out + rng.normal(0.0, cfg.noise_sigma, size=out.shape)
    if rng.random() < cfg.probability("feature_scaling"):
        out = out * (1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter, size=out.shape))
    return out


def augment(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Produce one random view of a sample; deterministic given the rng state.

    Images keep their shape and the [0, 1] value range; vectors get the
    fallback noise/scaling transforms.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return _augment_image(x, cfg, rng)
    if x.ndim == 1:
        return _augment_vector(x, cfg, rng)
    raise ConfigError(f"augment expects a (C, H, W) image or 1-D vector, got shape {x.shape}")


def build_multiview_batch(
    samples: np.ndarray,
    labels: np.ndarray,
    cfg: AugmentConfig,
    rng: np.random.Generator,
) -> MultiviewBatch:
    """Double a batch by appending one augmented view per original sample."""
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels)
    # a single original is allowed so trailing partial batches are never
    # dropped; it pairs with its own view
    if samples.shape[0] == 0:
        raise ValueError("cannot build a multiview batch from an empty batch")
    views = np.stack([augment(sample, cfg, rng) for sample in samples])
    return MultiviewBatch(
        inputs=np.concatenate([samples, views], axis=0),
        labels=np.concatenate([labels, labels]),
    )
