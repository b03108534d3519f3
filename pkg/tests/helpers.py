"""Independent oracles shared by the unit and acceptance tests.

These deliberately re-derive expected values with naive scalar loops and
brute-force arithmetic so they stay independent of the production code
paths they check.
"""

from __future__ import annotations

import math

import numpy as np


def supcon_reference(z: np.ndarray, labels: np.ndarray, temperature: float,
                     denominator_variant: str = "all_non_anchor",
                     anchor_reduction: str = "mean") -> float:
    """Per-anchor double loop over positives and the denominator set."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    terms = []
    for i in range(n):
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not positives:
            continue
        if denominator_variant == "negatives_only":
            denom_set = [a for a in range(n) if labels[a] != labels[i]]
        else:
            denom_set = [a for a in range(n) if a != i]
        denom = sum(math.exp(float(z[i] @ z[a]) / temperature) for a in denom_set)
        term = 0.0
        for p in positives:
            term += -math.log(math.exp(float(z[i] @ z[p]) / temperature) / denom)
        terms.append(term / len(positives))
    if anchor_reduction == "mean":
        return sum(terms) / len(terms)
    return sum(terms)


def focal_reference(probs_true: np.ndarray, alphas: np.ndarray, gamma: float) -> float:
    """Direct scalar evaluation of the focal term, mean over samples."""
    total = 0.0
    for p, a in zip(probs_true, alphas):
        total += -a * (1.0 - p) ** gamma * math.log(p)
    return total / len(probs_true)


def auc_reference(scores: np.ndarray, labels: np.ndarray, positive_class: int = 1) -> float:
    """O(n^2) pair counting with half credit for ties."""
    pos = [s for s, l in zip(scores, labels) if l == positive_class]
    neg = [s for s, l in zip(scores, labels) if l != positive_class]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def f1_reference(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def finite_difference(fn, values: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    """Hand-rolled central differences over a flat copy of ``values``."""
    values = values.astype(np.float64).copy()
    flat = values.reshape(-1)
    grads = np.zeros_like(flat)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + epsilon
        up = fn(values)
        flat[i] = original - epsilon
        down = fn(values)
        flat[i] = original
        grads[i] = (up - down) / (2 * epsilon)
    return grads.reshape(values.shape)


def pca_reconstruction_error_reference(features: np.ndarray, k: int = 2) -> float:
    """Reconstruction error from the top-k eigenvectors of the covariance."""
    centered = features - features.mean(axis=0)
    cov = centered.T @ centered / len(features)
    eigvals, eigvecs = np.linalg.eigh(cov)
    top = eigvecs[:, np.argsort(eigvals)[::-1][:k]]
    recon = centered @ top @ top.T
    return float(np.linalg.norm(centered - recon))
