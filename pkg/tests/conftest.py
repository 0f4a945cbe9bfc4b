import numpy as np
import pytest

from fps.container import FeatureSet
from fps.preprocess import SampleWeights
from fps.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


def random_featureset(
    rng,
    n=16,
    dim=5,
    n_classes=3,
    patches=0,
    labeled=True,
    tag="source",
):
    feats = rng.standard_normal((n, dim)).astype(np.float32)
    patch = None
    if patches:
        patch = (feats[:, None, :] + 0.3 * rng.standard_normal((n, patches, dim))).astype(
            np.float32
        )
    labels = rng.integers(0, n_classes, size=n).astype(np.int32) if labeled else None
    return FeatureSet(
        features=feats,
        patch_features=patch,
        labels=labels,
        domain_tag=tag,
        n_classes=n_classes,
    )


def random_weights(rng, n):
    raw = rng.uniform(0.5, 1.5, size=n)
    return SampleWeights(weights=n * raw / raw.sum())
