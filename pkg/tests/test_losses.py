import math

import numpy as np
import pytest

from fps.container import FeatureSet
from fps.errors import ValidationError
from fps.head import DecisionHead, logits_target, softmax
from fps.losses import (
    LossConfig,
    PoolingPerturbation,
    entropy_loss,
    loss_CE,
    loss_CR,
    loss_SCE,
    loss_SE,
    loss_cr_from_views,
    loss_delta,
    pooled_views,
    random_pool,
    sample_entropy,
    schedule,
    total_loss,
)
from fps.preprocess import SampleWeights
from fps.rng import make_rng

from conftest import random_featureset, random_weights


def unit_weights(n):
    return SampleWeights.uniform(n)


# ------------------------------------------------------------ entropies


def test_sample_entropy_uniform_is_ln12():
    p = np.full(12, 1.0 / 12.0)
    assert sample_entropy(p) == pytest.approx(math.log(12), abs=1e-12)
    # the natural-log convention puts the uniform 12-class value near 2.5
    assert abs(sample_entropy(p) - 2.4849) < 1e-3


def test_sample_entropy_one_hot_is_zero():
    assert sample_entropy(np.array([0.0, 1.0, 0.0])) == 0.0


def test_sample_entropy_two_point():
    assert sample_entropy(np.array([0.5, 0.5, 0.0])) == pytest.approx(math.log(2), abs=1e-12)


def test_sample_entropy_rejects_unnormalized():
    with pytest.raises(ValidationError):
        sample_entropy(np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        sample_entropy(np.array([1.2, -0.2]))


def test_loss_se_one_hot_rows():
    probs = np.eye(4)[[0, 1, 3]]
    assert loss_SE(probs, unit_weights(3)) == 0.0


def test_loss_se_uniform_rows():
    probs = np.full((5, 12), 1.0 / 12.0)
    assert loss_SE(probs, unit_weights(5)) == pytest.approx(math.log(12), abs=1e-12)


def test_loss_se_weighted_oracle():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [1 / 3, 1 / 3, 1 / 3]])
    weights = SampleWeights(weights=np.array([0.5, 1.5, 1.0]))
    expected = 0.0
    for w, row in zip(weights.weights, probs):
        ent = -sum(p * math.log(p) for p in row if p > 0)
        expected += w * ent
    expected /= 3
    assert loss_SE(probs, weights) == pytest.approx(expected, rel=1e-12)


def test_loss_ce_single_class_concentration():
    probs = np.tile([0.0, 1.0, 0.0], (6, 1))
    assert loss_CE(probs, unit_weights(6)) == 0.0


def test_loss_ce_uniform_mean_is_minimum():
    probs = np.eye(3)
    value = loss_CE(probs, unit_weights(3))
    assert value == pytest.approx(-math.log(3), abs=1e-12)


def test_loss_ce_two_row_symmetry():
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert loss_CE(probs, unit_weights(2)) == pytest.approx(-math.log(2), abs=1e-12)


def test_entropy_loss_endpoints_and_midpoint():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [1 / 3, 1 / 3, 1 / 3]])
    weights = SampleWeights(weights=np.array([0.5, 1.5, 1.0]))
    se = loss_SE(probs, weights)
    ce = loss_CE(probs, weights)
    assert entropy_loss(probs, weights, 1.0) == pytest.approx(se, rel=1e-12)
    assert entropy_loss(probs, weights, 0.0) == pytest.approx(ce, rel=1e-12)
    assert entropy_loss(probs, weights, 0.5) == pytest.approx((se + ce) / 2, rel=1e-12)


def test_entropy_loss_printed_sign_negates():
    probs = np.array([[0.9, 0.1], [0.4, 0.6]])
    w = unit_weights(2)
    assert entropy_loss(probs, w, 0.3, sign="printed") == pytest.approx(
        -entropy_loss(probs, w, 0.3), rel=1e-12
    )


def test_entropy_loss_permutation_invariant(rng):
    probs = softmax(rng.standard_normal((8, 4)))
    weights = random_weights(rng, 8)
    value = entropy_loss(probs, weights, 0.4)
    perm = rng.permutation(8)
    permuted = SampleWeights(weights=weights.weights[perm])
    assert entropy_loss(probs[perm], permuted, 0.4) == pytest.approx(value, rel=1e-12)


def test_loss_bounds_on_random_instances(rng):
    for _ in range(20):
        c = int(rng.integers(2, 7))
        n = int(rng.integers(1, 9))
        probs = softmax(rng.standard_normal((n, c)) * 3)
        w = random_weights(rng, n)
        assert -1e-12 <= loss_SE(probs, w) <= math.log(c) * w.weights.max() + 1e-12
        assert -math.log(c) - 1e-12 <= loss_CE(probs, w) <= 1e-12


# ----------------------------------------------------------- pooling/CR


def test_random_pool_single_patch_returns_it(rng):
    patch = rng.standard_normal((1, 4))
    out = random_pool(patch, PoolingPerturbation("uniform"), make_rng(0))
    assert np.allclose(out, patch[0], atol=1e-12)


def test_random_pool_identical_patches(rng):
    v = rng.standard_normal(3)
    patches = np.tile(v, (5, 1))
    out = random_pool(patches, PoolingPerturbation("squared_uniform"), make_rng(1))
    assert np.allclose(out, v, atol=1e-12)


def test_random_pool_matches_generator_sequence():
    patches = np.array([[1.0, 0.0], [0.0, 1.0]])
    for mode in ("uniform", "squared_uniform"):
        out = random_pool(patches, PoolingPerturbation(mode), make_rng(123))
        # reference reimplementation of the same draw sequence
        u = make_rng(123).random(2)
        omega = u * u if mode == "squared_uniform" else u
        expected = omega @ patches / omega.sum()
        assert np.allclose(out, expected, atol=1e-15)


def test_pooled_views_draw_order_is_sample_major(rng):
    patches = rng.standard_normal((3, 2, 4))
    va, vb = pooled_views(patches, PoolingPerturbation("uniform"), make_rng(9))
    u = make_rng(9).random((3, 2, 2))
    for i in range(3):
        for k, view in enumerate((va, vb)):
            w = u[i, k] / u[i, k].sum()
            assert np.allclose(view[i], w @ patches[i], atol=1e-12)


def test_loss_cr_zero_for_single_patch(rng):
    head = DecisionHead(W=rng.standard_normal((4, 3)), b=rng.standard_normal(3))
    patches = rng.standard_normal((6, 1, 4))
    value = loss_CR(head, patches, PoolingPerturbation(), unit_weights(6), make_rng(2))
    assert value == 0.0


def test_loss_cr_zero_head(rng):
    head = DecisionHead.zeros(4, 3)
    patches = rng.standard_normal((5, 3, 4))
    value = loss_CR(head, patches, PoolingPerturbation(), unit_weights(5), make_rng(3))
    assert value == 0.0


def test_loss_cr_seeded_oracle():
    head = DecisionHead(
        W=np.array([[0.2, -0.1], [0.0, 0.3], [0.1, 0.1]]),
        b=np.array([0.05, -0.05]),
        dW=np.full((3, 2), 0.01),
        db=np.array([0.1, 0.2]),
    )
    patches = np.arange(2 * 2 * 3, dtype=np.float64).reshape(2, 2, 3) / 10.0
    weights = SampleWeights(weights=np.array([0.8, 1.2]))
    seed = 77
    value = loss_CR(head, patches, PoolingPerturbation("uniform"), weights, make_rng(seed))

    # step-by-step evaluation with the same draw sequence
    u = make_rng(seed).random((2, 2, 2))
    total = 0.0
    for i in range(2):
        views = []
        for k in range(2):
            w = u[i, k] / u[i, k].sum()
            views.append(w @ patches[i])
        ya = (head.W + head.dW).T @ views[0] + head.b + head.db
        yb = (head.W + head.dW).T @ views[1] + head.b + head.db
        total += weights.weights[i] * np.linalg.norm(ya - yb)
    expected = total / 2 / 2  # mean over samples, then divided by C
    assert value == pytest.approx(expected, rel=1e-12)


def test_loss_cr_requires_patches(rng):
    head = DecisionHead.zeros(2, 2)
    with pytest.raises(ValidationError, match="patch"):
        loss_CR(head, None, PoolingPerturbation(), unit_weights(2), make_rng(0))


# ------------------------------------------------------------ delta/SCE


def test_loss_delta_zero():
    assert loss_delta(DecisionHead.zeros(3, 2)) == 0.0


def test_loss_delta_pythagorean():
    head = DecisionHead(
        W=np.zeros((2, 2)), b=np.zeros(2), dW=np.zeros((2, 2)), db=np.array([3.0, 4.0])
    )
    assert loss_delta(head) == pytest.approx(5.0, abs=1e-12)


def test_loss_delta_matches_elementwise_oracle(rng):
    dW = rng.standard_normal((4, 3)) * 0.1
    db = rng.standard_normal(3) * 0.1
    head = DecisionHead(W=np.zeros((4, 3)), b=np.zeros(3), dW=dW, db=db)
    expected = math.sqrt(sum(v * v for v in dW.ravel())) + math.sqrt(sum(v * v for v in db))
    assert loss_delta(head) == pytest.approx(expected, rel=1e-12)


def test_loss_sce_zero_head_is_lnC(rng):
    featset = random_featureset(rng, n=10, dim=4, n_classes=5)
    assert loss_SCE(DecisionHead.zeros(4, 5), featset) == pytest.approx(math.log(5), abs=1e-12)


def test_loss_sce_saturates_with_margin():
    featset = FeatureSet(
        features=np.array([[1.0], [-1.0]], np.float32),
        labels=np.array([1, 0], np.int32),
        n_classes=3,
    )
    head = DecisionHead(W=np.array([[-20.0, 20.0, 0.0]]), b=np.array([0.0, 0.0, -20.0]))
    assert loss_SCE(head, featset) < 1e-8


def test_loss_sce_matches_per_sample_oracle(rng):
    featset = random_featureset(rng, n=4, dim=3, n_classes=3)
    head = DecisionHead(W=rng.standard_normal((3, 3)), b=rng.standard_normal(3))
    expected = 0.0
    for x, y in zip(featset.features.astype(np.float64), featset.labels):
        logits = head.W.T @ x + head.b
        p = np.exp(logits - logits.max())
        p /= p.sum()
        expected += -math.log(p[y])
    assert loss_SCE(head, featset) == pytest.approx(expected / 4, rel=1e-10)


def test_loss_sce_requires_labels(rng):
    featset = random_featureset(rng, labeled=False)
    with pytest.raises(ValidationError, match="label"):
        loss_SCE(DecisionHead.zeros(5, 3), featset)


# ------------------------------------------------------------- schedule


def test_schedule_at_zero():
    cfg = LossConfig(alpha=0.6, alpha0=0.1)
    alpha_t, beta_t, gamma_t = schedule(cfg, 0)
    assert alpha_t == pytest.approx(0.1, abs=1e-15)
    assert gamma_t == pytest.approx(0.1, abs=1e-15)
    assert beta_t == 1.0  # printed form clamps at the start


def test_schedule_asymptotes():
    cfg = LossConfig(alpha=0.6, alpha0=0.1)
    alpha_t, beta_t, gamma_t = schedule(cfg, 100 * cfg.T)
    assert alpha_t == pytest.approx(cfg.alpha, abs=1e-10)
    assert beta_t == pytest.approx(cfg.beta, abs=1e-10)
    assert gamma_t == pytest.approx(0.0, abs=1e-10)


def test_schedule_printed_beta_unclamped_value():
    cfg = LossConfig(beta=0.95, beta0=0.1, clamp_beta=False)
    _, beta_t, _ = schedule(cfg, 0)
    assert beta_t == pytest.approx(1.8, abs=1e-12)
    cfg_clamped = LossConfig(beta=0.95, beta0=0.1, clamp_beta=True)
    assert schedule(cfg_clamped, 0)[1] == 1.0


def test_schedule_interp_form_starts_at_beta0():
    cfg = LossConfig(beta=0.95, beta0=0.1, beta_form="interp")
    assert schedule(cfg, 0)[1] == pytest.approx(0.1, abs=1e-12)
    assert schedule(cfg, 100 * cfg.T)[1] == pytest.approx(0.95, abs=1e-10)


# ------------------------------------------------------------ total loss


def test_total_loss_pure_supervised(rng):
    source = random_featureset(rng, n=8, dim=3, n_classes=3)
    target = random_featureset(rng, n=6, dim=3, n_classes=3, labeled=False, tag="target")
    head = DecisionHead(W=rng.standard_normal((3, 3)), b=rng.standard_normal(3))
    cfg = LossConfig(beta=1.0, beta0=1.0, cr_weight=0.0)
    total, parts = total_loss(
        head, source, target, None, SampleWeights.uniform(6), cfg, 10, make_rng(0)
    )
    assert total == parts["L_SCE"]


def test_total_loss_pure_unsupervised(rng):
    source = random_featureset(rng, n=8, dim=3, n_classes=3)
    target = random_featureset(rng, n=6, dim=3, n_classes=3, labeled=False, tag="target")
    head = DecisionHead(W=rng.standard_normal((3, 3)), b=rng.standard_normal(3))
    weights = SampleWeights.uniform(6)
    cfg = LossConfig(alpha=0.4, beta=0.0, beta0=0.0, cr_weight=0.0, gamma_amplitude=0.0)
    t = 5000
    total, parts = total_loss(head, source, target, None, weights, cfg, t, make_rng(0))
    probs = softmax(logits_target(head, target.features))
    alpha_t = schedule(cfg, t)[0]
    assert total == pytest.approx(entropy_loss(probs, weights, alpha_t), rel=1e-12)


def test_total_loss_component_sum_oracle(rng):
    source = random_featureset(rng, n=10, dim=4, n_classes=3)
    target = random_featureset(rng, n=9, dim=4, n_classes=3, patches=3, labeled=False)
    head = DecisionHead(
        W=rng.standard_normal((4, 3)),
        b=rng.standard_normal(3),
        dW=0.05 * rng.standard_normal((4, 3)),
        db=0.05 * rng.standard_normal(3),
    )
    weights = random_weights(rng, 9)
    cfg = LossConfig(alpha=0.7, cr_weight=0.8)
    patches = target.patch_features.astype(np.float64)
    for t in (0, 5000):
        seed = 1000 + t
        total, parts = total_loss(
            head, source, target, patches, weights, cfg, t, make_rng(seed)
        )
        alpha_t, beta_t, gamma_t = schedule(cfg, t)
        # recompute every component independently and assemble the printed form
        sce = loss_SCE(head, source)
        probs = softmax(logits_target(head, target.features))
        ent = alpha_t * loss_SE(probs, weights) + (1 - alpha_t) * loss_CE(probs, weights)
        va, vb = pooled_views(patches, PoolingPerturbation(), make_rng(seed))
        cr = loss_cr_from_views(head, va, vb, weights)
        delta = loss_delta(head)
        expected = beta_t * sce + (1 - beta_t) * (ent + cfg.cr_weight * cr + gamma_t * delta)
        assert total == pytest.approx(expected, rel=1e-12)
        assert parts["L_CR"] == pytest.approx(cr, rel=1e-12)
