"""scikit-learn style estimators wrapping the two-stage training strategies.

``SuperConClassifier`` runs any of the six strategies behind the usual
``fit`` / ``predict`` / ``predict_proba`` surface, and ``ContrastiveEncoder``
exposes stage-1 representation training as a transformer, so both compose
with pipelines, ``clone`` and grid search.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .augment import AugmentConfig
from .data import Dataset
from .losses import FocalConfig, SupConConfig
from .networks import ArchitectureConfig
from .training import (
    TrainConfig,
    build_stack_for_config,
    extract_embeddings,
    extract_features,
    fit_strategy,
    predict_proba,
    train_representation,
)

__all__ = ["SuperConClassifier", "ContrastiveEncoder"]


def _as_dataset(X: np.ndarray, y: np.ndarray, n_classes: int) -> Dataset:
    return Dataset(samples=X.astype(np.float64), labels=y, mode="vector", n_classes=n_classes)


class SuperConClassifier(ClassifierMixin, BaseEstimator):
    """Class-imbalance-aware classifier with a pluggable training strategy.

    Parameters mirror the training configuration; ``strategy`` selects one of
    Vanilla, FocalLoss, ROS, RUS, SuperConCE or SuperCon (default). For the
    two-stage strategies, stage 1 learns a contrastive representation and
    stage 2 fine-tunes only the classifier head on the frozen features.
    """

    def __init__(
        self,
        strategy: str = "SuperCon",
        stage1_epochs: int = 10,
        stage2_epochs: int = 10,
        batch_size: int = 32,
        stage1_lr: float = 0.01,
        stage2_lr: float = 5e-4,
        temperature: float = 0.1,
        focal_alpha: float = 0.25,
        focal_gamma: float = 5.0,
        hidden: tuple[int, ...] = (64, 32),
        projection_dim: int = 16,
        noise_sigma: float = 0.1,
        scale_jitter: float = 0.1,
        random_state: int = 0,
    ):
        self.strategy = strategy
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.batch_size = batch_size
        self.stage1_lr = stage1_lr
        self.stage2_lr = stage2_lr
        self.temperature = temperature
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.hidden = hidden
        self.projection_dim = projection_dim
        self.noise_sigma = noise_sigma
        self.scale_jitter = scale_jitter
        self.random_state = random_state

    def _build_config(self) -> TrainConfig:
        return TrainConfig(
            strategy=self.strategy,
            batch_size=self.batch_size,
            stage1_epochs=self.stage1_epochs,
            stage2_epochs=self.stage2_epochs,
            stage1_lr=self.stage1_lr,
            stage2_lr=self.stage2_lr,
            supcon=SupConConfig(temperature=self.temperature),
            focal=FocalConfig(alpha=self.focal_alpha, gamma=self.focal_gamma),
            augment=AugmentConfig(
                transforms=("gaussian_noise",),
                noise_sigma=self.noise_sigma,
                scale_jitter=self.scale_jitter,
            ),
            architecture=ArchitectureConfig(hidden=tuple(self.hidden), projection_dim=self.projection_dim),
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("SuperConClassifier needs at least 2 classes")
        dataset = _as_dataset(X, encoded, len(self.classes_))
        config = self._build_config()
        self.stack_, self.traces_, _, _ = fit_strategy(config, dataset)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "stack_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return predict_proba(self.stack_, X)

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[probs.argmax(axis=1)]

    def transform(self, X):
        """Extractor features for ``X`` (useful for inspecting the learnt space)."""
        check_is_fitted(self, "stack_")
        X = check_array(X, dtype=np.float64)
        return extract_features(self.stack_, X)


class ContrastiveEncoder(TransformerMixin, BaseEstimator):
    """Stage-1 representation learner exposed as a transformer.

    ``transform`` returns extractor features; set ``output='projection'`` for
    the unit-norm contrastive embeddings instead.
    """

    def __init__(
        self,
        stage1_epochs: int = 10,
        batch_size: int = 32,
        stage1_lr: float = 0.01,
        temperature: float = 0.1,
        hidden: tuple[int, ...] = (64, 32),
        projection_dim: int = 16,
        noise_sigma: float = 0.1,
        output: str = "features",
        random_state: int = 0,
    ):
        self.stage1_epochs = stage1_epochs
        self.batch_size = batch_size
        self.stage1_lr = stage1_lr
        self.temperature = temperature
        self.hidden = hidden
        self.projection_dim = projection_dim
        self.noise_sigma = noise_sigma
        self.output = output
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        dataset = _as_dataset(X, encoded, len(self.classes_))
        config = TrainConfig(
            strategy="SuperCon",
            batch_size=self.batch_size,
            stage1_epochs=self.stage1_epochs,
            stage1_lr=self.stage1_lr,
            supcon=SupConConfig(temperature=self.temperature),
            augment=AugmentConfig(transforms=("gaussian_noise",), noise_sigma=self.noise_sigma),
            architecture=ArchitectureConfig(hidden=tuple(self.hidden), projection_dim=self.projection_dim),
            seed=self.random_state,
        )
        self.stack_ = build_stack_for_config(config, dataset)
        self.trace_ = train_representation(self.stack_, dataset, config)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "stack_")
        X = check_array(X, dtype=np.float64)
        if self.output == "projection":
            return extract_embeddings(self.stack_, X)
        return extract_features(self.stack_, X)
