import hashlib
import struct

import numpy as np
import pytest

from fps.container import (
    HEADER_BYTES,
    FeatureSet,
    Manifest,
    expected_file_size,
    read_container,
    write_container,
)
from fps.errors import ContainerFormatError, ValidationError
from fps.rng import make_rng


def test_empty_set_round_trips(tmp_path):
    featset = FeatureSet(features=np.zeros((0, 4), np.float32))
    path = tmp_path / "empty.fpsb"
    write_container(featset, Manifest(), path)
    assert path.stat().st_size == HEADER_BYTES
    loaded, _ = read_container(path)
    assert loaded.n_samples == 0
    assert loaded.dim == 4
    assert loaded.labels is None


def test_small_labeled_round_trip_is_bit_identical(tmp_path):
    featset = FeatureSet(
        features=np.array([[1.5, -2.25, 3.0], [0.1, 0.2, 0.3]], np.float32),
        labels=np.array([0, 1], np.int32),
        n_classes=2,
    )
    path = tmp_path / "two.fpsb"
    write_container(featset, Manifest(dataset_name="toy"), path)
    loaded, manifest = read_container(path)
    assert loaded.features.tobytes() == featset.features.tobytes()
    assert np.array_equal(loaded.labels, featset.labels)
    assert manifest.dataset_name == "toy"


def test_same_inputs_give_identical_digest(tmp_path):
    rng = make_rng(7)
    featset = FeatureSet(
        features=rng.standard_normal((100, 8)).astype(np.float32),
        patch_features=rng.standard_normal((100, 16, 8)).astype(np.float32),
    )
    digests = []
    for name in ("a.fpsb", "b.fpsb"):
        path = tmp_path / name
        write_container(featset, Manifest(), path)
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_file_size_arithmetic(tmp_path):
    rng = make_rng(3)
    for n, p, d, labeled in [(5, 0, 3, True), (4, 2, 6, False), (1, 3, 2, True)]:
        featset = FeatureSet(
            features=rng.standard_normal((n, d)).astype(np.float32),
            patch_features=(
                rng.standard_normal((n, p, d)).astype(np.float32) if p else None
            ),
            labels=rng.integers(0, 2, n).astype(np.int32) if labeled else None,
            n_classes=2 if labeled else None,
        )
        path = tmp_path / f"{n}_{p}_{d}.fpsb"
        write_container(featset, Manifest(), path)
        assert path.stat().st_size == expected_file_size(n, p, d, labeled)
        assert path.stat().st_size == HEADER_BYTES + 4 * n * labeled + 4 * n * d + 4 * n * p * d


def test_write_read_round_trip_with_patches(tmp_path, rng):
    featset = FeatureSet(
        features=rng.standard_normal((7, 4)).astype(np.float32),
        patch_features=rng.standard_normal((7, 3, 4)).astype(np.float32),
        labels=np.array([0, 1, 2, 0, 1, 2, -1], np.int32),
        n_classes=3,
        domain_tag="target",
        class_names=["a", "b", "c"],
    )
    path = tmp_path / "p.fpsb"
    write_container(featset, Manifest(pooling_mode="mean"), path)
    loaded, manifest = read_container(path)
    assert loaded.features.tobytes() == featset.features.tobytes()
    assert loaded.patch_features.tobytes() == featset.patch_features.tobytes()
    assert np.array_equal(loaded.labels, featset.labels)
    assert loaded.domain_tag == "target"
    assert loaded.class_names == ["a", "b", "c"]
    assert manifest.pooling_mode == "mean"


def test_bad_magic_rejected(tmp_path):
    featset = FeatureSet(features=np.zeros((1, 2), np.float32))
    path = tmp_path / "bad.fpsb"
    write_container(featset, Manifest(), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerFormatError, match="magic"):
        read_container(path)


def test_bad_version_rejected(tmp_path):
    featset = FeatureSet(features=np.zeros((1, 2), np.float32))
    path = tmp_path / "v.fpsb"
    write_container(featset, Manifest(), path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<I", raw, 4, 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerFormatError, match="version"):
        read_container(path)


def test_truncated_payload_reports_offset(tmp_path, rng):
    featset = FeatureSet(features=rng.standard_normal((10, 4)).astype(np.float32))
    path = tmp_path / "t.fpsb"
    write_container(featset, Manifest(), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ContainerFormatError, match="byte offset"):
        read_container(path)


def test_nonneg_family_flags_flipped_sign_bit(tmp_path, rng):
    feats = rng.uniform(0.5, 2.0, size=(6, 3)).astype(np.float32)
    featset = FeatureSet(features=feats)
    path = tmp_path / "nn.fpsb"
    write_container(featset, Manifest(feature_family="relu_nonneg"), path)
    raw = bytearray(path.read_bytes())
    # flip the sign bit of the first value of sample 4 (little-endian f32)
    value_offset = HEADER_BYTES + 4 * (4 * 3) + 3
    raw[value_offset] ^= 0x80
    path.write_bytes(bytes(raw))
    with pytest.raises(ValidationError, match="sample 4"):
        read_container(path)


def test_nonneg_family_refused_on_write(rng, tmp_path):
    featset = FeatureSet(features=np.array([[0.5, -0.1]], np.float32))
    with pytest.raises(ValidationError, match="negative"):
        write_container(featset, Manifest(feature_family="relu_nonneg"), tmp_path / "x.fpsb")


def test_nonfinite_values_refused(tmp_path):
    featset = FeatureSet(features=np.array([[1.0, np.nan]], np.float32))
    with pytest.raises(ValidationError, match="non-finite"):
        write_container(featset, Manifest(), tmp_path / "nf.fpsb")


def test_label_range_validated(tmp_path):
    featset = FeatureSet(
        features=np.zeros((2, 2), np.float32),
        labels=np.array([0, 5], np.int32),
        n_classes=2,
    )
    with pytest.raises(ValidationError, match="label 5"):
        write_container(featset, Manifest(), tmp_path / "l.fpsb")


def test_minus_one_label_means_unlabeled(tmp_path):
    featset = FeatureSet(
        features=np.zeros((2, 2), np.float32),
        labels=np.array([-1, 1], np.int32),
        n_classes=2,
    )
    path = tmp_path / "semi.fpsb"
    write_container(featset, Manifest(), path)
    loaded, _ = read_container(path)
    assert loaded.labels.tolist() == [-1, 1]


def test_stats_fingerprint_survives_round_trip(tmp_path):
    featset = FeatureSet(
        features=np.zeros((2, 2), np.float32), stats_fingerprint="abc123"
    )
    path = tmp_path / "fp.fpsb"
    write_container(featset, Manifest(), path)
    loaded, manifest = read_container(path)
    assert loaded.stats_fingerprint == "abc123"
    assert manifest.extra["stats_fingerprint"] == "abc123"
