"""Training objectives: supervised contrastive loss, focal loss, cross-entropy.

All three are composed from tape ops, so gradients flow to the embeddings or
logits automatically and are covered by the finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DegenerateBatchError
from .tensor import Tensor

__all__ = [
    "SupConConfig",
    "FocalConfig",
    "supcon_loss",
    "focal_loss",
    "cross_entropy",
]

DENOMINATOR_VARIANTS = ("all_non_anchor", "negatives_only")
ANCHOR_REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class SupConConfig:
    """Temperature and the two structural knobs of the contrastive loss.

    ``all_non_anchor`` sums the denominator over every non-anchor entry (the
    bounded-below-by-zero formulation); ``negatives_only`` restricts it to
    samples of other classes.
    """

    temperature: float = 0.1
    denominator_variant: str = "all_non_anchor"
    anchor_reduction: str = "mean"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.denominator_variant not in DENOMINATOR_VARIANTS:
            raise ConfigError(f"denominator_variant must be one of {DENOMINATOR_VARIANTS}")
        if self.anchor_reduction not in ANCHOR_REDUCTIONS:
            raise ConfigError(f"anchor_reduction must be one of {ANCHOR_REDUCTIONS}")


@dataclass(frozen=True)
class FocalConfig:
    """Class weight alpha (minority gets ``alpha``, the rest ``1 - alpha``)
    and the focusing exponent gamma."""

    alpha: float = 0.25
    gamma: float = 5.0
    minority_class_id: int | None = None
    alpha_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")


def supcon_loss(z: Tensor, labels: np.ndarray, cfg: SupConConfig = SupConConfig()) -> Tensor:
    """Supervised contrastive loss over a multiview batch of unit embeddings.

    Each anchor i averages -log(exp(z_i.z_p / tau) / D_i) over its positives
    p (same label, excluding i), where D_i sums exp(z_i.z_a / tau) over the
    configured denominator set. Anchors with no positives are skipped;
    contributing anchors are combined by ``anchor_reduction``.
    """
    labels = np.asarray(labels)
    n = z.shape[0]
    if z.data.ndim != 2 or n < 2:
        raise ValueError(f"supcon_loss expects (2N, d) embeddings with 2N >= 2, got {z.shape}")
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch of {n}")
    norms = np.linalg.norm(z.data, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("supcon_loss requires unit-norm embedding rows (within 1e-9)")

    same = labels[:, None] == labels[None, :]
    eye = np.eye(n, dtype=bool)
    pos_mask = same & ~eye
    pos_counts = pos_mask.sum(axis=1)
    contributing = pos_counts > 0
    if not contributing.any():
        raise DegenerateBatchError("no anchor has a positive sample in this batch")

    if cfg.denominator_variant == "negatives_only":
        denom_mask = ~same
        if np.any(denom_mask.sum(axis=1) == 0):
            raise DegenerateBatchError("negatives_only variant requires every anchor to have a negative")
    else:
        denom_mask = ~eye
    denom_mask_f = denom_mask.astype(np.float64)

    logits = T.scale(T.matmul(z, T.transpose(z)), 1.0 / cfg.temperature)

    # masked log-sum-exp per row, with the row max subtracted for stability
    row_max = np.max(np.where(denom_mask, logits.data, -np.inf), axis=1)
    mask_t = Tensor(denom_mask_f)
    shifted = T.mul(T.sub(logits, Tensor(row_max[:, None])), mask_t)
    denom_rows = T.tensor_sum(T.mul(T.exp(shifted), mask_t), axis=1)
    log_denom = T.add(T.log(denom_rows), Tensor(row_max))

    safe_counts = np.where(contributing, pos_counts, 1).astype(np.float64)
    mean_pos = T.mul(
        T.tensor_sum(T.mul(logits, Tensor(pos_mask.astype(np.float64))), axis=1),
        Tensor(1.0 / safe_counts),
    )
    per_anchor = T.sub(log_denom, mean_pos)

    weights = contributing.astype(np.float64)
    if cfg.anchor_reduction == "mean":
        weights = weights / contributing.sum()
    return T.tensor_sum(T.mul(per_anchor, Tensor(weights)))


def _log_prob_true_class(logits: Tensor, labels: np.ndarray) -> Tensor:
    n, classes = logits.shape
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got logits shape {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch of {n}")
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must be in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), labels] = 1.0
    return T.tensor_sum(T.mul(T.log_softmax(logits, axis=-1), Tensor(onehot)), axis=1)


def focal_loss(logits: Tensor, labels: np.ndarray, cfg: FocalConfig = FocalConfig()) -> Tensor:
    """Mean of -alpha_t * (1 - p_t)^gamma * log(p_t) over the batch.

    p_t is the softmax probability of each sample's true class. With
    ``alpha_enabled`` off every class weight is 1, and with gamma 0 the loss
    reduces exactly to cross-entropy.
    """
    if not isinstance(logits, Tensor):
        logits = Tensor(logits)
    labels = np.asarray(labels)
    log_p = _log_prob_true_class(logits, labels)
    p = T.exp(log_p)
    focus = T.power(T.sub(Tensor(np.ones(len(labels))), p), cfg.gamma)
    if cfg.alpha_enabled:
        if cfg.minority_class_id is None:
            raise ConfigError("focal_loss needs minority_class_id when alpha weighting is enabled")
        alpha = np.where(labels == cfg.minority_class_id, cfg.alpha, 1.0 - cfg.alpha)
    else:
        alpha = np.ones(len(labels))
    per_sample = T.mul(T.mul(Tensor(alpha), focus), T.scale(log_p, -1.0))
    return T.tensor_mean(per_sample)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the true class."""
    if not isinstance(logits, Tensor):
        logits = Tensor(logits)
    return T.tensor_mean(T.scale(_log_prob_true_class(logits, labels), -1.0))
