"""Seeded generators for desk-scale verification data.

Gaussian class clusters with a controllable domain shift: the target
domain reuses the source class means after a translation (any dim) and an
optional rotation about the origin (2-D only). Labels are attached to both
domains; adaptation harnesses strip the target labels and use them only
for scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import FeatureSet
from .errors import ValidationError
from .rng import make_rng

SEPARATION_FACTOR = 6.0
_PLACEMENT_ATTEMPTS = 200


@dataclass
class ShiftSpec:
    classes: int = 3
    dim: int = 2
    per_class: int = 200
    spread: float = 1.0
    shift_translation: np.ndarray | None = None
    shift_rotation: float = 0.0
    patch_count: int = 0
    patch_noise: float = 0.1
    seed: int = 0
    class_names: list[str] | None = field(default=None)

    def __post_init__(self):
        if self.classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.spread <= 0:
            raise ValidationError("spread must be positive")
        if self.shift_translation is not None:
            self.shift_translation = np.asarray(self.shift_translation, dtype=np.float64)
            if self.shift_translation.shape != (self.dim,):
                raise ValidationError("shift_translation must be a dim-vector")
        if self.shift_rotation != 0.0 and self.dim != 2:
            raise ValidationError("rotation shift is only defined for 2-D features")


def _place_means(spec: ShiftSpec, rng: np.random.Generator) -> np.ndarray:
    """Seeded rejection sampling until all pairwise separations reach 6 * spread."""
    min_sep = SEPARATION_FACTOR * spec.spread
    box = 3.0 * spec.spread * spec.classes
    for attempt in range(_PLACEMENT_ATTEMPTS):
        means = rng.uniform(-box, box, size=(spec.classes, spec.dim))
        diffs = means[:, None, :] - means[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        dist[np.diag_indices(spec.classes)] = np.inf
        if dist.min() >= min_sep:
            return means
        if (attempt + 1) % 20 == 0:
            box *= 1.25
    raise ValidationError(
        f"could not place {spec.classes} class means at separation {min_sep} "
        f"after {_PLACEMENT_ATTEMPTS} attempts"
    )


def _sample_domain(
    means: np.ndarray,
    spec: ShiftSpec,
    rng: np.random.Generator,
    tag: str,
) -> FeatureSet:
    n = spec.classes * spec.per_class
    labels = np.repeat(np.arange(spec.classes, dtype=np.int32), spec.per_class)
    centers = means[labels]
    samples = centers + spec.spread * rng.standard_normal((n, spec.dim))
    patches = None
    if spec.patch_count > 0:
        noise = spec.patch_noise * rng.standard_normal((n, spec.patch_count, spec.dim))
        patches = (samples[:, None, :] + noise).astype(np.float32)
        # pooled feature = patch mean, accumulated in binary32 in patch order
        acc = np.zeros((n, spec.dim), dtype=np.float32)
        for p in range(spec.patch_count):
            acc += patches[:, p, :]
        pooled = acc / np.float32(spec.patch_count)
    else:
        pooled = samples.astype(np.float32)
    return FeatureSet(
        features=pooled,
        patch_features=patches,
        labels=labels,
        domain_tag=tag,
        class_names=spec.class_names,
        n_classes=spec.classes,
    )


def generate(spec: ShiftSpec) -> tuple[FeatureSet, FeatureSet]:
    """Build a (source, target) pair; deterministic for a given seed."""
    rng = make_rng(spec.seed)
    means = _place_means(spec, rng)

    target_means = means
    if spec.shift_rotation != 0.0:
        c, s = np.cos(spec.shift_rotation), np.sin(spec.shift_rotation)
        target_means = target_means @ np.array([[c, s], [-s, c]])
    if spec.shift_translation is not None:
        target_means = target_means + spec.shift_translation

    source = _sample_domain(means, spec, rng, "source")
    target = _sample_domain(target_means, spec, rng, "target")
    return source, target
