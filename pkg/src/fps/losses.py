"""Loss terms, random pooling, schedules, and total-loss assembly.

All losses return the value to be MINIMIZED. Natural logarithm throughout,
so the per-sample entropy of a uniform prediction over C classes is ln C.

The entropy objective combines two pulls: confident per-sample predictions
(low sample entropy) and balanced class usage (high entropy of the mean
prediction). The default combination is

    alpha_t * mean_w[SE(p_i)] - (1 - alpha_t) * SE(p_bar)

which is what ``entropy_sign="intent"`` computes; ``"printed"`` negates it
for auditing the opposite sign reading.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .container import FeatureSet
from .errors import ValidationError
from .head import DecisionHead, logits_source, logits_target, softmax
from .preprocess import SampleWeights

POOLING_MODES = ("uniform", "squared_uniform")
ENTROPY_SIGNS = ("intent", "printed")
BETA_FORMS = ("printed", "interp")

# candidate grid swept when tuning the entropy balance weight
ALPHA_CANDIDATES = (0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95)


@dataclass
class LossConfig:
    """Loss weights and schedule constants.

    ``alpha`` is the task-tuned entropy balance (see ALPHA_CANDIDATES);
    the remaining schedule constants default to the fixed values 0.1, 0.1,
    0.95, 1000, 3000 for alpha0, beta0, beta, T, T_gamma.
    """

    alpha: float = 0.5
    alpha0: float = 0.1
    beta: float = 0.95
    beta0: float = 0.1
    cr_weight: float = 1.0  # the lambda multiplier on the consistency term
    T: int = 1000
    T_gamma: int = 3000
    gamma_amplitude: float = 0.1
    clamp_beta: bool = True
    entropy_sign: str = "intent"
    beta_form: str = "printed"
    weight_sharpness: float = 5.0
    delta_enabled: bool = True  # False pins the target plane to the source plane

    def __post_init__(self):
        if self.T <= 0 or self.T_gamma <= 0:
            raise ValidationError("T and T_gamma must be positive")
        for name in ("alpha", "alpha0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.entropy_sign not in ENTROPY_SIGNS:
            raise ValidationError(f"entropy_sign must be one of {ENTROPY_SIGNS}")
        if self.beta_form not in BETA_FORMS:
            raise ValidationError(f"beta_form must be one of {BETA_FORMS}")


@dataclass
class PoolingPerturbation:
    """How pooling weights are drawn: uniform, or squared uniform draws."""

    mode: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in POOLING_MODES:
            raise ValidationError(f"mode must be one of {POOLING_MODES}")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        u = rng.random(shape)
        return u * u if self.mode == "squared_uniform" else u


def _checked_probs(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if (p < 0).any():
        raise ValidationError("probabilities must be non-negative")
    sums = p.sum(axis=-1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise ValidationError("probability rows must sum to 1 within 1e-6")
    return p


def _plogp(p: np.ndarray) -> np.ndarray:
    # 0 * log 0 := 0
    return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def row_entropies(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy of each probability row (natural log)."""
    return -_plogp(_checked_probs(probs)).sum(axis=-1)


def sample_entropy(p: np.ndarray) -> float:
    """Entropy of a single predicted distribution."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValidationError("sample_entropy expects a single probability vector")
    return float(row_entropies(p))


def _check_rows(probs: np.ndarray, weights: SampleWeights) -> None:
    if probs.shape[0] != weights.weights.shape[0]:
        raise ValidationError(
            f"{probs.shape[0]} probability rows but {weights.weights.shape[0]} weights"
        )


def loss_SE(probs: np.ndarray, weights: SampleWeights) -> float:
    """Weighted mean per-sample entropy; minimizing sharpens predictions."""
    probs = _checked_probs(probs)
    _check_rows(probs, weights)
    return float(np.mean(weights.weights * row_entropies(probs)))


def loss_CE(probs: np.ndarray, weights: SampleWeights) -> float:
    """Negated entropy of the weighted mean prediction.

    Minimizing pushes the average predicted distribution toward uniform;
    the global minimum is -ln C.
    """
    probs = _checked_probs(probs)
    _check_rows(probs, weights)
    p_bar = np.mean(weights.weights[:, None] * probs, axis=0)
    return float(_plogp(p_bar).sum())


def entropy_loss(
    probs: np.ndarray,
    weights: SampleWeights,
    alpha_t: float,
    sign: str = "intent",
) -> float:
    """alpha_t * loss_SE + (1 - alpha_t) * loss_CE (negated under "printed")."""
    if not 0.0 <= alpha_t <= 1.0:
        raise ValidationError(f"alpha_t must lie in [0, 1], got {alpha_t}")
    value = alpha_t * loss_SE(probs, weights) + (1.0 - alpha_t) * loss_CE(probs, weights)
    return -value if sign == "printed" else value


def random_pool(
    patches: np.ndarray,
    perturb: PoolingPerturbation,
    rng: np.random.Generator,
) -> np.ndarray:
    """Convex combination of patch rows with freshly drawn weights."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2 or patches.shape[0] < 1:
        raise ValidationError("random_pool expects a non-empty (P, d) patch matrix")
    omega = perturb.draw(rng, patches.shape[0])
    total = omega.sum()
    if total <= 0.0:  # all-zero draw; fall back to plain mean
        return patches.mean(axis=0)
    return (omega @ patches) / total


def pooled_views(
    patch_set: np.ndarray,
    perturb: PoolingPerturbation,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Two independently pooled views per sample.

    The (N, 2, P) weight block is drawn in one call, in sample order, so a
    parallel evaluation cannot reorder the stream.
    """
    patch_set = np.asarray(patch_set, dtype=np.float64)
    if patch_set.ndim != 3 or patch_set.shape[1] < 1:
        raise ValidationError("patch set must be (N, P, d) with P >= 1")
    n = patch_set.shape[0]
    omega = perturb.draw(rng, (n, 2, patch_set.shape[1]))
    totals = omega.sum(axis=2, keepdims=True)
    degenerate = totals <= 0.0
    if degenerate.any():
        omega = np.where(degenerate, 1.0, omega)
        totals = omega.sum(axis=2, keepdims=True)
    omega = omega / totals
    views = np.einsum("nkp,npd->nkd", omega, patch_set)
    return views[:, 0, :], views[:, 1, :]


def cr_values(
    head: DecisionHead,
    view_a: np.ndarray,
    view_b: np.ndarray,
    normalized: bool = False,
) -> np.ndarray:
    """Per-sample logit discrepancy between two pooled views (target plane).

    With ``normalized`` the discrepancy is divided by the mean logit norm
    of the two views, which removes the head-scale dependence when
    comparing distributions across heads.
    """
    ya = logits_target(head, view_a)
    yb = logits_target(head, view_b)
    cr = np.linalg.norm(ya - yb, axis=1)
    if normalized:
        scale = 0.5 * (np.linalg.norm(ya, axis=1) + np.linalg.norm(yb, axis=1))
        cr = np.where(scale > 0, cr / np.where(scale > 0, scale, 1.0), 0.0)
    return cr


def loss_cr_from_views(
    head: DecisionHead,
    view_a: np.ndarray,
    view_b: np.ndarray,
    weights: SampleWeights,
) -> float:
    """Weighted mean discrepancy divided by the class count."""
    _check_rows(view_a, weights)
    cr = cr_values(head, view_a, view_b)
    return float(np.mean(weights.weights * cr) / head.n_classes)


def loss_CR(
    head: DecisionHead,
    patch_set: np.ndarray,
    perturb: PoolingPerturbation,
    weights: SampleWeights,
    rng: np.random.Generator,
) -> float:
    """Consistency loss over two fresh random poolings of every sample."""
    if patch_set is None:
        raise ValidationError("consistency loss requires patch features; set cr_weight=0 instead")
    va, vb = pooled_views(patch_set, perturb, rng)
    return loss_cr_from_views(head, va, vb, weights)


def loss_delta(head: DecisionHead) -> float:
    """Perturbation magnitude: Frobenius norm of dW plus 2-norm of db."""
    return float(np.linalg.norm(head.dW) + np.linalg.norm(head.db))


def loss_SCE(head: DecisionHead, source: FeatureSet) -> float:
    """Mean cross-entropy of the source plane on labeled samples (unweighted)."""
    if source.labels is None or (source.labels < 0).any():
        raise ValidationError("supervised loss requires labels on every sample")
    y = logits_source(head, source.features)
    return float(np.mean(_nll_rows(y, source.labels)))


def _nll_rows(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return lse - shifted[np.arange(logits.shape[0]), labels]


def schedule(config: LossConfig, t: int) -> tuple[float, float, float]:
    """Step-indexed weights (alpha_t, beta_t, gamma_t).

    alpha_t relaxes from alpha0 to alpha; gamma_t decays from the amplitude
    toward 0; beta_t follows ``beta + (beta - beta0) * exp(-t/T)`` (the
    printed form), clamped into [0, 1] by default so the unsupervised
    weight (1 - beta_t) stays non-negative. ``beta_form="interp"`` rises
    from beta0 to beta instead.
    """
    if t < 0:
        raise ValidationError("step index must be non-negative")
    decay = math.exp(-t / config.T)
    alpha_t = config.alpha + (config.alpha0 - config.alpha) * decay
    if config.beta_form == "interp":
        beta_t = config.beta + (config.beta0 - config.beta) * decay
    else:
        beta_t = config.beta + (config.beta - config.beta0) * decay
    if config.clamp_beta:
        beta_t = min(1.0, max(0.0, beta_t))
    gamma_t = config.gamma_amplitude * math.exp(-t / config.T_gamma)
    return alpha_t, beta_t, gamma_t


def total_loss(
    head: DecisionHead,
    source: FeatureSet,
    target: FeatureSet,
    patch_target: np.ndarray | None,
    weights: SampleWeights,
    config: LossConfig,
    t: int,
    rng: np.random.Generator,
    perturb: PoolingPerturbation | None = None,
) -> tuple[float, dict]:
    """Dynamically weighted total loss and its component breakdown.

    total = beta_t * SCE + (1 - beta_t) * [entropy + lambda * CR + gamma_t * delta]

    Target probabilities come from the perturbed plane. The breakdown dict
    carries every component plus the schedule weights for logging.
    """
    alpha_t, beta_t, gamma_t = schedule(config, t)
    sce = loss_SCE(head, source)
    probs = softmax(logits_target(head, target.features))
    se = loss_SE(probs, weights)
    ce = loss_CE(probs, weights)
    ent = alpha_t * se + (1.0 - alpha_t) * ce
    if config.entropy_sign == "printed":
        ent = -ent
    if patch_target is not None and config.cr_weight != 0.0:
        cr = loss_CR(head, patch_target, perturb or PoolingPerturbation(), weights, rng)
        cr_term = config.cr_weight * cr
    else:
        cr = 0.0
        cr_term = 0.0
    delta = loss_delta(head)
    total = beta_t * sce + (1.0 - beta_t) * (ent + cr_term + gamma_t * delta)
    breakdown = {
        "L_total": total,
        "L_SCE": sce,
        "L_SE": se,
        "L_CE": ce,
        "L_CR": cr,
        "L_delta": delta,
        "alpha_t": alpha_t,
        "beta_t": beta_t,
        "gamma_t": gamma_t,
    }
    return float(total), breakdown


def warn_missing_patches(cr_weight: float) -> float:
    """Force the consistency weight to 0 when no patch features exist."""
    if cr_weight != 0.0:
        warnings.warn(
            "no patch features in the target set; consistency weight forced to 0",
            stacklevel=2,
        )
    return 0.0
