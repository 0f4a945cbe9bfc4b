"""Diagnostics: distance matrices, distribution exports, 2-D loss landscape.

Everything here returns plot-ready data (arrays and row dicts); rendering
lives in the report module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import FeatureSet
from .errors import ValidationError
from .head import DecisionHead, logits_source, logits_target, softmax
from .losses import LossConfig, loss_CE, loss_SCE, loss_SE, row_entropies
from .preprocess import SampleWeights, compute_sample_weights

KDE_GRID_SIZE = 512
KDE_SUPPORT_SIGMAS = 4.0


def class_distance_matrix(
    a: FeatureSet,
    b: FeatureSet,
    labels_a: np.ndarray | None = None,
    labels_b: np.ndarray | None = None,
) -> np.ndarray:
    """Mean pairwise Euclidean distance between classes of two sets.

    Entry (i, j) averages distances over all pairs drawn from class i of
    ``a`` and class j of ``b``. When both arguments are the same set, the
    diagonal excludes self-pairs. Empty classes yield NaN entries.
    """
    labels_a = a.labels if labels_a is None else np.asarray(labels_a)
    labels_b = b.labels if labels_b is None else np.asarray(labels_b)
    if labels_a is None or labels_b is None:
        raise ValidationError("labels required for both sets")
    c = int(max(labels_a.max(), labels_b.max())) + 1
    same_set = (
        a.features.shape == b.features.shape
        and np.array_equal(a.features, b.features)
        and np.array_equal(labels_a, labels_b)
    )
    xa = a.features.astype(np.float64)
    xb = b.features.astype(np.float64)
    out = np.full((c, c), np.nan)
    for i in range(c):
        rows_i = xa[labels_a == i]
        if rows_i.shape[0] == 0:
            continue
        for j in range(c):
            rows_j = xb[labels_b == j]
            if rows_j.shape[0] == 0:
                continue
            d = _pairwise_distances(rows_i, rows_j)
            if same_set and i == j:
                n = rows_i.shape[0]
                if n < 2:
                    continue
                out[i, j] = (d.sum() - np.trace(d)) / (n * (n - 1))
            else:
                out[i, j] = d.mean()
    return out


def _pairwise_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sq = (
        (x * x).sum(axis=1)[:, None]
        + (y * y).sum(axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass
class DistributionExport:
    counts: np.ndarray
    edges: np.ndarray
    kde_grid: np.ndarray | None = None
    kde_density: np.ndarray | None = None


def distribution_export(
    values: np.ndarray,
    bins: int = 50,
    kde: bool = False,
    grid_size: int = KDE_GRID_SIZE,
) -> DistributionExport:
    """Histogram counts plus an optional Gaussian-kernel density.

    The KDE bandwidth follows Silverman's rule (4 / 3n)^(1/5) * std; the
    density is evaluated on a uniform grid wide enough that it integrates
    to 1 within 1e-3 by the trapezoid rule.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValidationError("cannot export an empty distribution")
    if not np.isfinite(values).all():
        raise ValidationError("distribution values must be finite")
    counts, edges = np.histogram(values, bins=bins)
    if not kde:
        return DistributionExport(counts=counts, edges=edges)

    n = values.size
    sigma = values.std()
    if sigma <= 0:
        sigma = max(abs(values[0]), 1.0) * 1e-3  # constant input: one narrow bump
    h = sigma * (4.0 / (3.0 * n)) ** 0.2
    grid = np.linspace(
        values.min() - KDE_SUPPORT_SIGMAS * h,
        values.max() + KDE_SUPPORT_SIGMAS * h,
        grid_size,
    )
    density = np.zeros_like(grid)
    norm = 1.0 / (n * h * np.sqrt(2.0 * np.pi))
    for start in range(0, n, 4096):
        chunk = values[start : start + 4096]
        z = (grid[:, None] - chunk[None, :]) / h
        density += norm * np.exp(-0.5 * z * z).sum(axis=1)
    return DistributionExport(counts=counts, edges=edges, kde_grid=grid, kde_density=density)


def entropy_values(head: DecisionHead, featset: FeatureSet, use_target_plane: bool = True) -> np.ndarray:
    """Per-sample prediction entropies under the chosen plane."""
    logits_fn = logits_target if use_target_plane else logits_source
    return row_entropies(softmax(logits_fn(head, featset.features)))


def plane_head(theta: float, bias: float) -> DecisionHead:
    """Encode sin(theta) x1 + cos(theta) x2 + bias as a 2-class head.

    The scalar plane value f(x) becomes the logit pair [+f/2, -f/2], so
    the softmax and entropy machinery applies unchanged and class 0 wins
    exactly where f(x) > 0 (ties also go to class 0).
    """
    s, c = np.sin(theta), np.cos(theta)
    return DecisionHead(
        W=np.array([[s / 2.0, -s / 2.0], [c / 2.0, -c / 2.0]]),
        b=np.array([bias / 2.0, -bias / 2.0]),
    )


def landscape_2d(
    source: FeatureSet,
    target: FeatureSet,
    theta_grid: np.ndarray,
    b_grid: np.ndarray,
    loss_cfg: LossConfig,
    weights: SampleWeights | None = None,
) -> list[dict]:
    """Accuracy and loss surfaces over a (theta, b) plane grid.

    Rows carry source/target/combined accuracy plus the supervised,
    unsupervised (entropy at the asymptotic alpha), and joint losses per
    cell, ready for polar plotting.
    """
    if source.dim != 2 or target.dim != 2:
        raise ValidationError("landscape requires 2-D features")
    if source.labels is None or target.labels is None:
        raise ValidationError("landscape requires labels on both sets")
    if source.class_count() > 2 or target.class_count() > 2:
        raise ValidationError("landscape requires 2 classes")
    if weights is None:
        weights = compute_sample_weights(target, A=loss_cfg.weight_sharpness)

    rows = []
    for theta in np.asarray(theta_grid, dtype=np.float64):
        for bias in np.asarray(b_grid, dtype=np.float64):
            head = plane_head(float(theta), float(bias))
            pred_s = np.argmax(logits_source(head, source.features), axis=1)
            pred_t = np.argmax(logits_source(head, target.features), axis=1)
            acc_s = float(np.mean(pred_s == source.labels))
            acc_t = float(np.mean(pred_t == target.labels))
            n_s, n_t = source.n_samples, target.n_samples
            acc_c = (acc_s * n_s + acc_t * n_t) / (n_s + n_t)
            sup = loss_SCE(head, source)
            probs_t = softmax(logits_source(head, target.features))
            unsup = loss_cfg.alpha * loss_SE(probs_t, weights) + (
                1.0 - loss_cfg.alpha
            ) * loss_CE(probs_t, weights)
            if loss_cfg.entropy_sign == "printed":
                unsup = -unsup
            joint = loss_cfg.beta * sup + (1.0 - loss_cfg.beta) * unsup
            rows.append(
                {
                    "theta": float(theta),
                    "b": float(bias),
                    "acc_source": acc_s,
                    "acc_target": acc_t,
                    "acc_combined": acc_c,
                    "loss_supervised": sup,
                    "loss_unsupervised": unsup,
                    "loss_joint": joint,
                }
            )
    return rows
