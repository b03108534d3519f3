"""Two-stage contrastive training for class-imbalanced classification.

Stage 1 learns a feature extractor with a supervised contrastive loss on
multiview batches; stage 2 freezes it and fine-tunes a classifier with focal
(or cross-entropy) loss. The package also ships the resampling baselines,
tie-aware evaluation metrics, scikit-learn estimator wrappers, and an
experiment CLI (``supercon``).
"""

__version__ = "0.1.0"

from .augment import AugmentConfig, MultiviewBatch, augment, build_multiview_batch
from .data import (
    Dataset,
    SplitSpec,
    generate_blobs,
    load_dataset,
    load_image_dataset,
    ros_resample,
    rus_subsample,
    save_dataset,
    stratified_split,
)
from .estimator import ContrastiveEncoder, SuperConClassifier
from .losses import FocalConfig, SupConConfig, cross_entropy, focal_loss, supcon_loss
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    confusion,
    macro_f1,
    micro_f1,
    precision_recall_f1,
    project_2d,
    roc_auc,
)
from .networks import (
    ArchitectureConfig,
    Classifier,
    FeatureExtractor,
    MappingModule,
    ModelStack,
    build_model_stack,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import GradCheckReport, Tensor, backward, grad_check, sgd_step
from .training import (
    RunReport,
    TrainConfig,
    TrainTrace,
    cosine_separation,
    finetune_classifier,
    fit_strategy,
    run_strategy,
    train_representation,
)

__all__ = [
    "__version__",
    "AugmentConfig",
    "MultiviewBatch",
    "augment",
    "build_multiview_batch",
    "Dataset",
    "SplitSpec",
    "generate_blobs",
    "load_dataset",
    "load_image_dataset",
    "ros_resample",
    "rus_subsample",
    "save_dataset",
    "stratified_split",
    "ContrastiveEncoder",
    "SuperConClassifier",
    "FocalConfig",
    "SupConConfig",
    "cross_entropy",
    "focal_loss",
    "supcon_loss",
    "ConfusionMatrix",
    "MetricsReport",
    "confusion",
    "macro_f1",
    "micro_f1",
    "precision_recall_f1",
    "project_2d",
    "roc_auc",
    "ArchitectureConfig",
    "Classifier",
    "FeatureExtractor",
    "MappingModule",
    "ModelStack",
    "build_model_stack",
    "load_checkpoint",
    "save_checkpoint",
    "GradCheckReport",
    "Tensor",
    "backward",
    "grad_check",
    "sgd_step",
    "RunReport",
    "TrainConfig",
    "TrainTrace",
    "cosine_separation",
    "finetune_classifier",
    "fit_strategy",
    "run_strategy",
    "train_representation",
]
