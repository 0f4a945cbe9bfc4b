"""Feature standardization and similarity-based sample weighting.

Training happens in a standardized space: per-dimension mean/std are
estimated over the pooled features of both domains together and every
feature is mapped to zero mean and std ``s`` (default 2.5). Feature
families whose values are non-negative may be square-rooted first to pull
them toward a normal shape.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .container import FeatureSet
from .errors import ValidationError

DEGENERATE_SIGMA = 1e-12
DEFAULT_STD_SCALE = 2.5
DEFAULT_SHARPNESS = 5.0


@dataclass
class PreprocessStats:
    """Per-dimension standardization parameters fitted on source + target."""

    mu: np.ndarray
    sigma: np.ndarray
    s: float = DEFAULT_STD_SCALE
    sqrt_applied: bool = False

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ValidationError("mu and sigma must be 1-D vectors of equal length")
        if (self.sigma < 0).any():
            raise ValidationError("sigma entries must be non-negative")

    @property
    def degenerate(self) -> np.ndarray:
        """Mask of dimensions with (near-)zero variance; these map to 0."""
        return self.sigma < DEGENERATE_SIGMA

    def fingerprint(self) -> str:
        """Digest identifying this exact transform, stored with processed sets."""
        h = hashlib.sha256()
        h.update(self.mu.astype("<f8").tobytes())
        h.update(self.sigma.astype("<f8").tobytes())
        h.update(np.float64(self.s).astype("<f8").tobytes())
        h.update(b"\x01" if self.sqrt_applied else b"\x00")
        return h.hexdigest()


@dataclass
class SampleWeights:
    """Normalized per-target-sample weights, mean 1."""

    weights: np.ndarray
    A: float = DEFAULT_SHARPNESS

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise ValidationError("weights must be a non-empty 1-D vector")
        if (self.weights <= 0).any():
            raise ValidationError("weights must be positive")
        if abs(self.weights.mean() - 1.0) > 1e-6:
            raise ValidationError("weights must have mean 1 after normalization")

    @classmethod
    def uniform(cls, n: int) -> "SampleWeights":
        return cls(weights=np.ones(n))


def fit_stats(
    source: FeatureSet,
    target: FeatureSet,
    s: float = DEFAULT_STD_SCALE,
    apply_sqrt: bool = False,
) -> PreprocessStats:
    """Fit per-dimension mean/std over the union of both domains' pooled features."""
    if source.dim != target.dim:
        raise ValidationError(f"dimension mismatch: source {source.dim} vs target {target.dim}")
    union = np.concatenate(
        [source.features.astype(np.float64), target.features.astype(np.float64)], axis=0
    )
    if apply_sqrt:
        if union.size and union.min() < 0:
            raise ValidationError("square-root transform requires non-negative features")
        union = np.sqrt(union)
    mu = union.mean(axis=0)
    sigma = np.sqrt(np.mean((union - mu) ** 2, axis=0))  # population std, ddof=0
    return PreprocessStats(mu=mu, sigma=sigma, s=float(s), sqrt_applied=bool(apply_sqrt))


def apply_stats(featset: FeatureSet, stats: PreprocessStats) -> FeatureSet:
    """Map features into the standardized training space.

    Degenerate dimensions go to 0. Patch features, when present, receive
    the same elementwise transform with the pooled-feature statistics.
    """
    if featset.dim != stats.mu.shape[0]:
        raise ValidationError(
            f"dimension mismatch: features {featset.dim} vs stats {stats.mu.shape[0]}"
        )
    fp = stats.fingerprint()
    out = FeatureSet(
        features=_transform(featset.features, stats),
        patch_features=(
            None
            if featset.patch_features is None
            else _transform(featset.patch_features, stats)
        ),
        labels=featset.labels,
        domain_tag=featset.domain_tag,
        class_names=featset.class_names,
        n_classes=featset.n_classes,
        stats_fingerprint=fp,
    )
    return out


def _transform(values: np.ndarray, stats: PreprocessStats) -> np.ndarray:
    x = values.astype(np.float64)
    if stats.sqrt_applied:
        if x.size and x.min() < 0:
            raise ValidationError("square-root transform requires non-negative features")
        x = np.sqrt(x)
    safe_sigma = np.where(stats.degenerate, 1.0, stats.sigma)
    x = (x - stats.mu) / safe_sigma * stats.s
    x[..., stats.degenerate] = 0.0
    return x.astype(np.float32)


def compute_sample_weights(
    target: FeatureSet,
    A: float = DEFAULT_SHARPNESS,
    block: int = 1024,
) -> SampleWeights:
    """Weight target samples inversely to how similar they are to the rest.

    For each pair the cosine similarity CC_ij is taken (self-pairs
    included); w_i = 1 / sum_j exp(A * CC_ij), then w is rescaled to mean
    1. Rows with zero norm get cosine 0 against everything by convention.
    O(N^2 d), computed in row blocks with float64 accumulation in a fixed
    block order so results are reproducible.
    """
    n = target.n_samples
    if n == 0:
        raise ValidationError("cannot weight an empty target set")
    x = target.features.astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    nonzero = norms > 0
    unit = np.zeros_like(x)
    unit[nonzero] = x[nonzero] / norms[nonzero, None]

    denom = np.zeros(n, dtype=np.float64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        cc = unit[start:stop] @ unit.T
        # a zero row has cosine 0 with everything, including itself
        cc[:, ~nonzero] = 0.0
        cc[~nonzero[start:stop], :] = 0.0
        denom[start:stop] = np.exp(A * cc).sum(axis=1)
    w = 1.0 / denom
    w_tilde = n * w / w.sum()
    return SampleWeights(weights=w_tilde, A=float(A))
