"""Label-free model selection.

The intra-class distance of pseudo-labeled target features rates a head
without target labels: tighter pseudo-clusters mean better-placed planes.
Sweeping the entropy balance weight and keeping the candidate with the
smallest distance selects hyperparameters unsupervised.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .container import FeatureSet
from .errors import ValidationError
from .losses import LossConfig

ALPHA0_RULES = ("fixed", "half")


@dataclass
class ICDMResult:
    d_intra_hat: float
    d_intra_true: float | None = None
    R: float | None = None
    per_class_counts: np.ndarray | None = None


@dataclass
class SweepRow:
    alpha: float
    d_intra_hat: float
    R: float | None
    target_accuracy: float | None
    selected: bool = False


def _rms_centroid_distance(x: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    sq = np.zeros(x.shape[0], dtype=np.float64)
    for c in range(n_classes):
        mask = labels == c
        if not mask.any():
            continue  # empty classes contribute nothing
        centroid = x[mask].mean(axis=0)
        sq[mask] = ((x[mask] - centroid) ** 2).sum(axis=1)
    return float(np.sqrt(sq.mean()))


def icdm(
    target: FeatureSet,
    pseudo_labels: np.ndarray,
    true_labels: np.ndarray | None = None,
    n_classes: int | None = None,
) -> ICDMResult:
    """Root-mean-square distance of samples to their pseudo-label centroids.

    With true labels the same quantity is computed for the real partition
    and the ratio R reported; R is only a cross-task scale and is not
    needed to pick hyperparameters.
    """
    if target.n_samples == 0:
        raise ValidationError("intra-class distance is undefined for an empty set")
    pseudo_labels = np.asarray(pseudo_labels)
    if pseudo_labels.shape != (target.n_samples,):
        raise ValidationError("one pseudo-label per sample required")
    if n_classes is None:
        n_classes = max(target.class_count(), int(pseudo_labels.max()) + 1)
    if pseudo_labels.min() < 0 or pseudo_labels.max() >= n_classes:
        raise ValidationError(f"pseudo-labels outside [0, {n_classes})")

    counts = np.bincount(pseudo_labels, minlength=n_classes)
    if (counts > 0).sum() <= 1:
        warnings.warn("all samples fall in a single pseudo-class", stacklevel=2)

    x = target.features.astype(np.float64)
    d_hat = _rms_centroid_distance(x, pseudo_labels, n_classes)
    d_true = None
    ratio = None
    if true_labels is not None:
        true_labels = np.asarray(true_labels)
        d_true = _rms_centroid_distance(x, true_labels, n_classes)
        ratio = d_hat / d_true if d_true > 0 else None
    return ICDMResult(
        d_intra_hat=d_hat,
        d_intra_true=d_true,
        R=ratio,
        per_class_counts=counts,
    )


def sweep_alpha(
    source: FeatureSet,
    target: FeatureSet,
    candidates: list[float],
    loss_cfg: LossConfig,
    train_cfg,
    alpha0_rule: str = "fixed",
) -> tuple[float, list[SweepRow]]:
    """Adapt once per candidate and pick the smallest intra-class distance.

    Every run shares the master seed so the balance weight is the only
    varying factor. Target labels, when present, are stripped before
    adaptation and used only for the reported accuracy column. Ties break
    toward the smaller candidate. FPS_THREADS > 1 runs candidates in
    parallel; the table is assembled in candidate order either way.
    """
    from .head import accuracy, predict
    from .trainer import adapt

    if not candidates:
        raise ValidationError("candidate list must be non-empty")
    if alpha0_rule not in ALPHA0_RULES:
        raise ValidationError(f"alpha0_rule must be one of {ALPHA0_RULES}")

    stripped = target.without_labels()

    def run(alpha: float) -> SweepRow:
        cfg = replace(
            loss_cfg,
            alpha=alpha,
            alpha0=alpha / 2.0 if alpha0_rule == "half" else loss_cfg.alpha0,
        )
        report = adapt(source, stripped, cfg, train_cfg)
        pseudo = predict(report.final_head, stripped, use_target_plane=True)
        result = icdm(
            stripped,
            pseudo,
            true_labels=target.labels,
            n_classes=report.final_head.n_classes,
        )
        acc = None
        if target.labels is not None:
            acc = accuracy(report.final_head, target, use_target_plane=True)
        return SweepRow(alpha=alpha, d_intra_hat=result.d_intra_hat, R=result.R, target_accuracy=acc)

    workers = int(os.environ.get("FPS_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, candidates))
    else:
        rows = [run(a) for a in candidates]

    best = min(rows, key=lambda r: (r.d_intra_hat, r.alpha))
    for row in rows:
        row.selected = row is best
    return best.alpha, rows
