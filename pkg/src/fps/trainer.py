"""Full-batch SGD over the decision head.

Plain SGD (momentum optional, default 0) with a linear learning-rate
warmup and a constant rate afterward. Gradients and parameters live in
float64 for the whole run; every step is guarded against non-finite
losses. Runs are bitwise reproducible from the master seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .container import FeatureSet
from .errors import NumericalAbort, ValidationError
from .gradients import grad_sce, grad_total
from .head import DecisionHead, accuracy, logits_target, predict, softmax
from .losses import LossConfig, PoolingPerturbation, row_entropies, warn_missing_patches
from .preprocess import SampleWeights, compute_sample_weights
from .rng import make_rng
from .selection import icdm

HISTOGRAM_BINS = 50


@dataclass
class TrainConfig:
    max_lr: float = 1.0
    total_steps: int = 36000
    warmup_steps: int = 4000
    batch_size: int | None = None  # None = full batch
    momentum: float = 0.0
    master_seed: int = 0
    log_every: int = 500
    pooling_mode: str = "uniform"

    def __post_init__(self):
        if self.max_lr <= 0:
            raise ValidationError("max_lr must be positive")
        if self.warmup_steps > self.total_steps:
            raise ValidationError("warmup_steps must not exceed total_steps")


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray


@dataclass
class AdaptReport:
    final_head: DecisionHead
    loss_trace: list[dict]
    target_accuracy: float | None
    se_histogram: Histogram
    cr_histogram: Histogram | None
    d_intra_hat: float
    elapsed: float
    weights: SampleWeights = field(repr=False, default=None)  # type: ignore[assignment]


def learning_rate(cfg: TrainConfig, t: int) -> float:
    """Linear ramp to max_lr over the warmup, constant afterward."""
    if cfg.warmup_steps <= 0:
        return cfg.max_lr
    return cfg.max_lr * min(1.0, t / cfg.warmup_steps)


def _check_fingerprints(source: FeatureSet, target: FeatureSet) -> None:
    fs, ft = source.stats_fingerprint, target.stats_fingerprint
    if fs is not None and ft is not None and fs != ft:
        raise ValidationError(
            f"preprocessing mismatch: source stats fingerprint {fs} differs from target {ft}"
        )


def _sgd_step(head: DecisionHead, grad, velocity, lr: float, momentum: float) -> None:
    for name in ("W", "b", "dW", "db"):
        g = getattr(grad, name)
        if momentum != 0.0:
            velocity[name] = momentum * velocity[name] + g
            g = velocity[name]
        getattr(head, name)[...] -= lr * g


def adapt(
    source: FeatureSet,
    target: FeatureSet,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
) -> AdaptReport:
    """Adapt the decision head to the target domain.

    Both sets must be preprocessed with the same statistics (checked via
    their fingerprints). Target labels, when present, are never read by
    the optimization; they only feed the reported accuracy.
    """
    if source.labels is None:
        raise ValidationError("source set must be labeled")
    if source.dim != target.dim:
        raise ValidationError("source and target dims differ")
    _check_fingerprints(source, target)

    n_classes = source.class_count()
    if n_classes < 2:
        raise ValidationError("need at least 2 source classes")

    started = time.perf_counter()
    weights = compute_sample_weights(target, A=loss_cfg.weight_sharpness)

    patches = target.patch_features
    cfg = loss_cfg
    if patches is None and cfg.cr_weight != 0.0:
        cfg = replace(cfg, cr_weight=warn_missing_patches(cfg.cr_weight))
    patch_f64 = None if patches is None else patches.astype(np.float64)

    head = DecisionHead.zeros(source.dim, n_classes)
    velocity = {k: np.zeros_like(getattr(head, k)) for k in ("W", "b", "dW", "db")}
    rng = make_rng(train_cfg.master_seed)
    perturb = PoolingPerturbation(mode=train_cfg.pooling_mode)

    # unlabeled view of the target for the optimization path
    target_opt = target.without_labels()

    trace: list[dict] = []
    for t in range(train_cfg.total_steps):
        src_batch, tgt_batch, tgt_patches, w_batch = _batch(
            source, target_opt, patch_f64, weights, train_cfg.batch_size, rng
        )
        total, breakdown, grad = grad_total(
            head, src_batch, tgt_batch, tgt_patches, w_batch, cfg, t, rng, perturb
        )
        if not np.isfinite(total):
            raise NumericalAbort(t, breakdown)
        if not cfg.delta_enabled:
            # plane tolerance switched off: dW/db never leave zero, so the
            # target plane coincides with the source plane throughout
            grad = grad._replace(dW=np.zeros_like(grad.dW), db=np.zeros_like(grad.db))
        if t % train_cfg.log_every == 0 or t == train_cfg.total_steps - 1:
            trace.append({"step": t, **breakdown})
        _sgd_step(head, grad, velocity, learning_rate(train_cfg, t), train_cfg.momentum)

    return _build_report(
        head, trace, source, target, patch_f64, weights, perturb, rng, started
    )


def _batch(source, target, patches, weights, batch_size, rng):
    """Full sets by default; seeded subsets in minibatch mode.

    Minibatch subsets renormalize their weights to mean 1, so the mean-
    prediction entropy term is batch-estimated rather than exact.
    """
    if batch_size is None:
        return source, target, patches, weights
    idx_s = rng.choice(source.n_samples, size=min(batch_size, source.n_samples), replace=False)
    idx_t = rng.choice(target.n_samples, size=min(batch_size, target.n_samples), replace=False)
    src = FeatureSet(
        features=source.features[idx_s],
        labels=source.labels[idx_s],
        n_classes=source.class_count(),
    )
    tgt = FeatureSet(features=target.features[idx_t], n_classes=target.n_classes)
    sub_w = weights.weights[idx_t]
    w = SampleWeights(weights=sub_w * (len(sub_w) / sub_w.sum()), A=weights.A)
    return src, tgt, None if patches is None else patches[idx_t], w


def _build_report(head, trace, source, target, patches, weights, perturb, rng, started):
    probs = softmax(logits_target(head, target.features))
    se_values = row_entropies(probs)
    se_hist = Histogram(*np.histogram(se_values, bins=HISTOGRAM_BINS))
    cr_hist = None
    if patches is not None:
        from .losses import cr_values, pooled_views

        va, vb = pooled_views(patches, perturb, rng)
        cr_hist = Histogram(*np.histogram(cr_values(head, va, vb), bins=HISTOGRAM_BINS))
    pseudo = predict(head, target, use_target_plane=True)
    d_hat = icdm(target, pseudo, n_classes=head.n_classes).d_intra_hat
    target_acc = None
    if target.labels is not None:
        target_acc = accuracy(head, target, use_target_plane=True)
    return AdaptReport(
        final_head=head,
        loss_trace=trace,
        target_accuracy=target_acc,
        se_histogram=se_hist,
        cr_histogram=cr_hist,
        d_intra_hat=d_hat,
        elapsed=time.perf_counter() - started,
        weights=weights,
    )


def train_supervised(featset: FeatureSet, train_cfg: TrainConfig) -> DecisionHead:
    """Minimize the supervised cross-entropy alone on one labeled set.

    Serves both as the source-only baseline and, when given target or
    joint labels, as the fully supervised reference; same optimizer
    contract as adapt. A zero-step config returns the zero head unchanged.
    """
    if featset.labels is None or (featset.labels < 0).any():
        raise ValidationError("supervised training requires labels on every sample")
    n_classes = featset.class_count()
    head = DecisionHead.zeros(featset.dim, n_classes)
    velocity = {k: np.zeros_like(getattr(head, k)) for k in ("W", "b", "dW", "db")}
    rng = make_rng(train_cfg.master_seed)
    for t in range(train_cfg.total_steps):
        batch = featset
        if train_cfg.batch_size is not None:
            idx = rng.choice(
                featset.n_samples, size=min(train_cfg.batch_size, featset.n_samples), replace=False
            )
            batch = FeatureSet(
                features=featset.features[idx],
                labels=featset.labels[idx],
                n_classes=n_classes,
            )
        value, grad = grad_sce(head, batch)
        if not np.isfinite(value):
            raise NumericalAbort(t, {"L_SCE": value})
        _sgd_step(head, grad, velocity, learning_rate(train_cfg, t), train_cfg.momentum)
    return head


def merge_labeled(a: FeatureSet, b: FeatureSet) -> FeatureSet:
    """Concatenate two labeled sets (the joint-supervision oracle input)."""
    if a.labels is None or b.labels is None:
        raise ValidationError("both sets must be labeled")
    if a.dim != b.dim:
        raise ValidationError("dims differ")
    return FeatureSet(
        features=np.concatenate([a.features, b.features], axis=0),
        labels=np.concatenate([a.labels, b.labels]),
        domain_tag="joint",
        n_classes=max(a.class_count(), b.class_count()),
        class_names=a.class_names,
        stats_fingerprint=a.stats_fingerprint,
    )
