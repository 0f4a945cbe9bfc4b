"""Analytic gradients of every loss with respect to (W, b, dW, db).

Each function returns the loss value together with a HeadGrad so the
trainer never re-evaluates the forward pass. The formulas are verified
against central finite differences in the test suite.

Conventions: source logits touch only (W, b); target-plane losses touch
W and dW identically (and b, db identically) because the plane is their
sum; the view difference in the consistency term cancels both biases.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .container import FeatureSet
from .errors import ValidationError
from .head import DecisionHead, logits_source, logits_target, softmax
from .losses import (
    LossConfig,
    PoolingPerturbation,
    _nll_rows,
    pooled_views,
    schedule,
)
from .preprocess import SampleWeights


class HeadGrad(NamedTuple):
    W: np.ndarray
    b: np.ndarray
    dW: np.ndarray
    db: np.ndarray

    @classmethod
    def zeros(cls, head: DecisionHead) -> "HeadGrad":
        return cls(
            np.zeros_like(head.W),
            np.zeros_like(head.b),
            np.zeros_like(head.dW),
            np.zeros_like(head.db),
        )

    def scaled(self, c: float) -> "HeadGrad":
        return HeadGrad(c * self.W, c * self.b, c * self.dW, c * self.db)

    def added(self, other: "HeadGrad", c: float = 1.0) -> "HeadGrad":
        return HeadGrad(
            self.W + c * other.W,
            self.b + c * other.b,
            self.dW + c * other.dW,
            self.db + c * other.db,
        )


def _safe_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.where(p > 0, p, 1.0))


def grad_sce(head: DecisionHead, source: FeatureSet) -> tuple[float, HeadGrad]:
    """Supervised cross-entropy on the source plane."""
    if source.labels is None or (source.labels < 0).any():
        raise ValidationError("supervised loss requires labels on every sample")
    x = source.features.astype(np.float64)
    y = logits_source(head, x)
    value = float(np.mean(_nll_rows(y, source.labels)))
    p = softmax(y)
    p[np.arange(x.shape[0]), source.labels] -= 1.0
    g = p / x.shape[0]
    return value, HeadGrad(x.T @ g, g.sum(axis=0), np.zeros_like(head.dW), np.zeros_like(head.db))


def _target_probs(head: DecisionHead, x: np.ndarray) -> np.ndarray:
    return softmax(logits_target(head, x))


def grad_se(
    head: DecisionHead, target: FeatureSet, weights: SampleWeights
) -> tuple[float, HeadGrad]:
    """Weighted mean sample entropy on the perturbed plane."""
    x = target.features.astype(np.float64)
    p = _target_probs(head, x)
    logp = _safe_log(p)
    ent = -(p * logp).sum(axis=1)
    w = weights.weights
    value = float(np.mean(w * ent))
    # dSE/dy_k = -p_k (log p_k + SE)
    g = np.where(p > 0, -p * (logp + ent[:, None]), 0.0) * (w[:, None] / x.shape[0])
    gw = x.T @ g
    gb = g.sum(axis=0)
    return value, HeadGrad(gw, gb, gw.copy(), gb.copy())


def grad_ce(
    head: DecisionHead, target: FeatureSet, weights: SampleWeights
) -> tuple[float, HeadGrad]:
    """Negated entropy of the weighted mean prediction, perturbed plane."""
    x = target.features.astype(np.float64)
    p = _target_probs(head, x)
    w = weights.weights
    p_bar = np.mean(w[:, None] * p, axis=0)
    log_pbar = _safe_log(p_bar)
    value = float((p_bar * log_pbar).sum())
    # d(-SE(p_bar))/dy_ik = (w_i/N) p_ik (log pbar_k - sum_c p_ic log pbar_c)
    inner = p @ log_pbar
    g = p * (log_pbar[None, :] - inner[:, None]) * (w[:, None] / x.shape[0])
    gw = x.T @ g
    gb = g.sum(axis=0)
    return value, HeadGrad(gw, gb, gw.copy(), gb.copy())


def grad_cr_from_views(
    head: DecisionHead,
    view_a: np.ndarray,
    view_b: np.ndarray,
    weights: SampleWeights,
) -> tuple[float, HeadGrad]:
    """Consistency loss for fixed pooled views.

    The bias drops out of the view difference, so only W and dW receive
    gradient; a zero-discrepancy sample contributes subgradient 0.
    """
    delta = np.asarray(view_a, np.float64) - np.asarray(view_b, np.float64)
    u = delta @ (head.W + head.dW)
    r = np.linalg.norm(u, axis=1)
    w = weights.weights
    n, c = delta.shape[0], head.n_classes
    value = float(np.mean(w * r) / c)
    coef = np.where(r > 0, w / (n * c * np.where(r > 0, r, 1.0)), 0.0)
    gw = delta.T @ (coef[:, None] * u)
    return value, HeadGrad(gw, np.zeros_like(head.b), gw.copy(), np.zeros_like(head.db))


def grad_delta(head: DecisionHead) -> tuple[float, HeadGrad]:
    """Perturbation magnitude; subgradient 0 at the origin keeps a zero
    initialization exactly at zero."""
    nw = float(np.linalg.norm(head.dW))
    nb = float(np.linalg.norm(head.db))
    gdw = head.dW / nw if nw > 0 else np.zeros_like(head.dW)
    gdb = head.db / nb if nb > 0 else np.zeros_like(head.db)
    return nw + nb, HeadGrad(np.zeros_like(head.W), np.zeros_like(head.b), gdw, gdb)


def grad_total(
    head: DecisionHead,
    source: FeatureSet,
    target: FeatureSet,
    patch_target: np.ndarray | None,
    weights: SampleWeights,
    config: LossConfig,
    t: int,
    rng: np.random.Generator,
    perturb: PoolingPerturbation | None = None,
) -> tuple[float, dict, HeadGrad]:
    """Total loss, component breakdown, and its gradient in one pass."""
    alpha_t, beta_t, gamma_t = schedule(config, t)
    sce, g_sce = grad_sce(head, source)
    se, g_se = grad_se(head, target, weights)
    ce, g_ce = grad_ce(head, target, weights)
    ent_sign = -1.0 if config.entropy_sign == "printed" else 1.0
    ent = ent_sign * (alpha_t * se + (1.0 - alpha_t) * ce)
    if patch_target is not None and config.cr_weight != 0.0:
        va, vb = pooled_views(patch_target, perturb or PoolingPerturbation(), rng)
        cr, g_cr = grad_cr_from_views(head, va, vb, weights)
    else:
        cr, g_cr = 0.0, HeadGrad.zeros(head)
    delta, g_delta = grad_delta(head)

    unsup = 1.0 - beta_t
    total = beta_t * sce + unsup * (ent + config.cr_weight * cr + gamma_t * delta)
    grad = (
        g_sce.scaled(beta_t)
        .added(g_se, unsup * ent_sign * alpha_t)
        .added(g_ce, unsup * ent_sign * (1.0 - alpha_t))
        .added(g_cr, unsup * config.cr_weight)
        .added(g_delta, unsup * gamma_t)
    )
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
    return float(total), breakdown, grad
