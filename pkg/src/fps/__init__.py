"""Frozen-feature domain adaptation by optimizing linear decision planes."""

from .container import FeatureSet, Manifest, read_container, write_container
from .errors import ContainerFormatError, FpsError, NumericalAbort, ValidationError
from .head import DecisionHead, accuracy, logits_source, logits_target, predict, softmax
from .losses import (
    ALPHA_CANDIDATES,
    LossConfig,
    PoolingPerturbation,
    entropy_loss,
    loss_CE,
    loss_CR,
    loss_delta,
    loss_SCE,
    loss_SE,
    random_pool,
    sample_entropy,
    schedule,
    total_loss,
)
from .preprocess import (
    PreprocessStats,
    SampleWeights,
    apply_stats,
    compute_sample_weights,
    fit_stats,
)
from .selection import ICDMResult, SweepRow, icdm, sweep_alpha
from .synthetic import ShiftSpec, generate
from .trainer import AdaptReport, TrainConfig, adapt, train_supervised

__version__ = "0.1.0"

__all__ = [
    "ALPHA_CANDIDATES",
    "AdaptReport",
    "ContainerFormatError",
    "DecisionHead",
    "FeatureSet",
    "FpsError",
    "ICDMResult",
    "LossConfig",
    "Manifest",
    "NumericalAbort",
    "PoolingPerturbation",
    "PreprocessStats",
    "SampleWeights",
    "ShiftSpec",
    "SweepRow",
    "TrainConfig",
    "ValidationError",
    "accuracy",
    "adapt",
    "apply_stats",
    "compute_sample_weights",
    "entropy_loss",
    "fit_stats",
    "generate",
    "icdm",
    "logits_source",
    "logits_target",
    "loss_CE",
    "loss_CR",
    "loss_SCE",
    "loss_SE",
    "loss_delta",
    "predict",
    "random_pool",
    "read_container",
    "sample_entropy",
    "schedule",
    "softmax",
    "sweep_alpha",
    "total_loss",
    "train_supervised",
    "write_container",
]
