import math

import numpy as np
import pytest

from fps.analysis import (
    class_distance_matrix,
    distribution_export,
    entropy_values,
    landscape_2d,
    plane_head,
)
from fps.container import FeatureSet
from fps.errors import ValidationError
from fps.head import DecisionHead
from fps.losses import LossConfig
from fps.rng import make_rng
from fps.synthetic import ShiftSpec, generate


def as_set(rows, labels):
    return FeatureSet(
        features=np.asarray(rows, np.float32),
        labels=np.asarray(labels, np.int32),
    )


def test_distance_matrix_repeated_points_diag_zero():
    rows = [[1.0, 0.0]] * 3 + [[0.0, 4.0]] * 3
    featset = as_set(rows, [0, 0, 0, 1, 1, 1])
    matrix = class_distance_matrix(featset, featset)
    assert matrix[0, 0] == 0.0 and matrix[1, 1] == 0.0
    assert matrix[0, 1] == pytest.approx(np.hypot(1.0, 4.0), rel=1e-6)


def test_distance_matrix_construction_value():
    a = as_set([[0.0], [0.0]], [0, 1])
    b = as_set([[10.0], [0.0]], [0, 1])
    matrix = class_distance_matrix(a, b)
    assert matrix[0, 0] == pytest.approx(10.0)
    assert matrix[1, 1] == pytest.approx(0.0)


def test_distance_matrix_matches_pairwise_oracle(rng):
    feats = rng.standard_normal((14, 3)).astype(np.float32)
    labels = rng.integers(0, 3, 14)
    a = as_set(feats, labels)
    matrix = class_distance_matrix(a, a)
    x = feats.astype(np.float64)
    for i in range(3):
        for j in range(3):
            pairs = []
            for p in np.flatnonzero(labels == i):
                for q in np.flatnonzero(labels == j):
                    if i == j and p == q:
                        continue
                    pairs.append(np.linalg.norm(x[p] - x[q]))
            assert matrix[i, j] == pytest.approx(np.mean(pairs), rel=1e-9)


def test_distance_matrix_symmetric_on_same_set(rng):
    feats = rng.standard_normal((12, 4)).astype(np.float32)
    labels = rng.integers(0, 3, 12)
    a = as_set(feats, labels)
    matrix = class_distance_matrix(a, a)
    assert np.allclose(matrix, matrix.T, atol=1e-12)


def test_distance_matrix_empty_class_is_nan():
    a = as_set([[0.0], [1.0]], [0, 2])
    matrix = class_distance_matrix(a, a)
    assert np.isnan(matrix[1, 1]) and np.isnan(matrix[0, 1])
    assert np.isnan(matrix[0, 0])  # single point: no non-self pairs


# --------------------------------------------------------- distributions


def test_distribution_constant_values():
    export = distribution_export(np.full(40, 3.0), bins=10, kde=True)
    assert (export.counts > 0).sum() == 1
    peak = export.kde_grid[np.argmax(export.kde_density)]
    assert peak == pytest.approx(3.0, abs=1e-3)
    area = np.trapezoid(export.kde_density, export.kde_grid)
    assert abs(area - 1.0) < 1e-3


def test_distribution_density_integrates_to_one():
    values = make_rng(0).normal(2.0, 1.5, size=400)
    export = distribution_export(values, bins=30, kde=True)
    area = np.trapezoid(export.kde_density, export.kde_grid)
    assert abs(area - 1.0) < 1e-3
    assert export.counts.sum() == 400


def test_zero_head_entropy_mass_at_ln12(rng):
    featset = FeatureSet(features=rng.standard_normal((200, 6)).astype(np.float32))
    se = entropy_values(DecisionHead.zeros(6, 12), featset)
    assert np.allclose(se, math.log(12), atol=1e-9)
    export = distribution_export(se, bins=20, kde=True)
    peak = export.kde_grid[np.argmax(export.kde_density)]
    assert abs(peak - math.log(12)) < 0.05


def test_distribution_rejects_empty_and_nonfinite():
    with pytest.raises(ValidationError):
        distribution_export(np.array([]))
    with pytest.raises(ValidationError):
        distribution_export(np.array([1.0, np.nan]))


# ------------------------------------------------------------- landscape


def two_cluster_sets(rng, separation=5.0):
    n = 60
    pos = rng.normal([separation, 0.0], 0.4, size=(n, 2))
    neg = rng.normal([-separation, 0.0], 0.4, size=(n, 2))
    feats = np.concatenate([pos, neg]).astype(np.float32)
    labels = np.array([0] * n + [1] * n, np.int32)
    return as_set(feats, labels)


def test_landscape_best_cell_at_expected_angle(rng):
    source = two_cluster_sets(rng)
    target = two_cluster_sets(rng)
    thetas = np.linspace(0.0, 2 * np.pi, 36, endpoint=False)
    biases = np.linspace(-2.0, 2.0, 5)
    rows = landscape_2d(source, target, thetas, biases, LossConfig(alpha=0.5))
    top = max(r["acc_combined"] for r in rows)
    step = thetas[1] - thetas[0]
    # the cell nearest (pi/2, 0) must attain the grid maximum
    near = min(rows, key=lambda r: (abs(r["theta"] - np.pi / 2), abs(r["b"])))
    assert abs(near["theta"] - np.pi / 2) <= step / 2 + 1e-9
    assert near["acc_combined"] == top == 1.0


def test_landscape_orientation_symmetry(rng):
    source = two_cluster_sets(rng)
    target = two_cluster_sets(rng)
    thetas = np.linspace(0.0, 2 * np.pi, 12, endpoint=False)
    biases = np.linspace(-1.5, 1.5, 5)
    cfg = LossConfig(alpha=0.5)
    rows = landscape_2d(source, target, thetas, biases, cfg)
    mirrored = landscape_2d(source, target, thetas + np.pi, -biases, cfg)
    # cell order is preserved, so rows pair up positionally
    for row, mirror in zip(rows, mirrored):
        assert row["acc_combined"] + mirror["acc_combined"] == pytest.approx(1.0, abs=1e-12)


def test_landscape_joint_minimum_sits_in_high_accuracy_cell(rng):
    spec = ShiftSpec(
        classes=2,
        dim=2,
        per_class=80,
        shift_translation=np.array([1.0, 0.5]),
        seed=4,
    )
    source, target = generate(spec)
    thetas = np.linspace(0.0, 2 * np.pi, 48, endpoint=False)
    biases = np.linspace(-12.0, 12.0, 13)
    rows = landscape_2d(source, target, thetas, biases, LossConfig(alpha=0.5))
    best_loss = min(rows, key=lambda r: r["loss_joint"])
    top_acc = max(r["acc_combined"] for r in rows)
    assert best_loss["acc_combined"] >= top_acc - 0.02


def test_landscape_requires_2d_two_classes(rng):
    bad_dim = FeatureSet(
        features=rng.standard_normal((4, 3)).astype(np.float32),
        labels=np.zeros(4, np.int32),
    )
    good = two_cluster_sets(rng)
    with pytest.raises(ValidationError, match="2-D"):
        landscape_2d(bad_dim, bad_dim, [0.0], [0.0], LossConfig())
    three_class = as_set(good.features[:6], [0, 1, 2, 0, 1, 2])
    with pytest.raises(ValidationError, match="2 classes"):
        landscape_2d(three_class, three_class, [0.0], [0.0], LossConfig())


def test_plane_head_logit_encoding():
    head = plane_head(0.3, -0.7)
    x = np.array([1.2, -0.4])
    f = math.sin(0.3) * 1.2 + math.cos(0.3) * (-0.4) + (-0.7)
    logits = x @ head.W + head.b
    assert logits[0] == pytest.approx(f / 2, rel=1e-12)
    assert logits[1] == pytest.approx(-f / 2, rel=1e-12)
