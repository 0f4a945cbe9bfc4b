"""Binary feature container and its JSON manifest sidecar.

Layout (all little-endian, fixed, readable from any language without a
serialization library):

    magic      4 bytes  b"FPSB"
    version    u32      currently 1
    n_samples  u64
    n_patches  u64      0 when no patch features are stored
    dim        u64
    label_flag u8       1 when labels follow
    class_count u32
    labels     i32 * n_samples              (only when label_flag = 1)
    features   f32 * n_samples * dim        (row-major)
    patches    f32 * n_samples * n_patches * dim   ([sample][patch][dim])

The manifest is written as UTF-8 JSON next to the container at
``<path>.json``. Label value -1 is reserved for "unlabeled" so one file
can hold a semi-labeled export.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError, ValidationError

MAGIC = b"FPSB"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQBI")
HEADER_BYTES = _HEADER.size  # 37

POOLING_MODES = ("mean", "cls", "none")
FEATURE_FAMILIES = ("relu_nonneg", "general")


@dataclass
class FeatureSet:
    """Frozen feature vectors for one domain.

    ``features`` is the pooled N x d matrix every loss except the
    consistency term works from; ``patch_features`` (N x P x d) is only
    needed for random pooling and may be absent. ``labels`` may be absent
    (target domain) or contain -1 for individual unlabeled samples.
    """

    features: np.ndarray
    patch_features: np.ndarray | None = None
    labels: np.ndarray | None = None
    domain_tag: str = ""
    class_names: list[str] | None = None
    n_classes: int | None = None
    stats_fingerprint: str | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {self.features.shape}")
        if self.patch_features is not None:
            self.patch_features = np.ascontiguousarray(self.patch_features, dtype=np.float32)
            if self.patch_features.ndim != 3 or self.patch_features.shape[0] != self.n_samples:
                raise ValidationError(
                    f"patch_features must be (n_samples, P, dim), got {self.patch_features.shape}"
                )
            if self.patch_features.shape[2] != self.dim:
                raise ValidationError("patch_features dim differs from pooled features dim")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
            if self.labels.shape != (self.n_samples,):
                raise ValidationError(
                    f"labels must have shape ({self.n_samples},), got {self.labels.shape}"
                )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_patches(self) -> int:
        return 0 if self.patch_features is None else self.patch_features.shape[1]

    def class_count(self) -> int:
        """Number of classes: explicit, from class_names, or from labels."""
        if self.n_classes is not None:
            return int(self.n_classes)
        if self.class_names is not None:
            return len(self.class_names)
        if self.labels is not None and self.labels.size:
            top = int(self.labels.max())
            return top + 1 if top >= 0 else 0
        return 0

    def validate(self) -> None:
        """Check the stored-data invariants; raise ValidationError on the first hit."""
        bad = _first_nonfinite_sample(self.features)
        if bad is not None:
            raise ValidationError(f"non-finite pooled feature at sample {bad}")
        if self.patch_features is not None:
            bad = _first_nonfinite_sample(self.patch_features.reshape(self.n_samples, -1))
            if bad is not None:
                raise ValidationError(f"non-finite patch feature at sample {bad}")
        if self.labels is not None:
            c = self.class_count()
            ok = (self.labels == -1) | ((self.labels >= 0) & (self.labels < max(c, 1)))
            if not ok.all():
                idx = int(np.flatnonzero(~ok)[0])
                raise ValidationError(
                    f"label {int(self.labels[idx])} at sample {idx} outside [0, {c})"
                )

    def without_labels(self) -> "FeatureSet":
        """Copy with labels stripped (the adaptation input contract)."""
        return FeatureSet(
            features=self.features,
            patch_features=self.patch_features,
            labels=None,
            domain_tag=self.domain_tag,
            class_names=self.class_names,
            n_classes=self.n_classes if self.n_classes is not None else self.class_count() or None,
            stats_fingerprint=self.stats_fingerprint,
        )


@dataclass
class Manifest:
    """Sidecar metadata describing how a container was produced."""

    dataset_name: str = ""
    backbone_id: str = ""
    pooling_mode: str = "none"
    feature_family: str = "general"
    created_by: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pooling_mode not in POOLING_MODES:
            raise ValidationError(f"pooling_mode must be one of {POOLING_MODES}")
        if self.feature_family not in FEATURE_FAMILIES:
            raise ValidationError(f"feature_family must be one of {FEATURE_FAMILIES}")

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "backbone_id": self.backbone_id,
            "pooling_mode": self.pooling_mode,
            "feature_family": self.feature_family,
            "created_by": self.created_by,
            "seed": self.seed,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(
            dataset_name=d.get("dataset_name", ""),
            backbone_id=d.get("backbone_id", ""),
            pooling_mode=d.get("pooling_mode", "none"),
            feature_family=d.get("feature_family", "general"),
            created_by=d.get("created_by", ""),
            seed=d.get("seed"),
            extra=d.get("extra", {}) or {},
        )


def _first_nonfinite_sample(rows: np.ndarray) -> int | None:
    mask = np.isfinite(rows).all(axis=1) if rows.ndim == 2 else np.isfinite(rows)
    if mask.all():
        return None
    return int(np.flatnonzero(~mask)[0])


def expected_file_size(n_samples: int, n_patches: int, dim: int, labeled: bool) -> int:
    """Exact byte size of a container with the given shape."""
    size = HEADER_BYTES
    if labeled:
        size += 4 * n_samples
    size += 4 * n_samples * dim
    size += 4 * n_samples * n_patches * dim
    return size


def write_container(featset: FeatureSet, manifest: Manifest, path: str | Path) -> None:
    """Write the container plus its ``<path>.json`` manifest sidecar.

    Refuses non-finite payloads; the write is all-or-nothing per file.
    """
    featset.validate()
    if manifest.feature_family == "relu_nonneg":
        _check_nonneg(featset)
    path = Path(path)
    label_flag = 1 if featset.labels is not None else 0
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        featset.n_samples,
        featset.n_patches,
        featset.dim,
        label_flag,
        featset.class_count(),
    )
    if featset.stats_fingerprint is not None:
        manifest.extra = dict(manifest.extra)
        manifest.extra["stats_fingerprint"] = featset.stats_fingerprint
    with open(path, "wb") as fh:
        fh.write(header)
        if label_flag:
            fh.write(featset.labels.astype("<i4").tobytes())
        fh.write(featset.features.astype("<f4").tobytes())
        if featset.n_patches:
            fh.write(featset.patch_features.astype("<f4").tobytes())
    sidecar = dict(manifest.to_dict())
    sidecar["domain_tag"] = featset.domain_tag
    if featset.class_names is not None:
        sidecar["class_names"] = list(featset.class_names)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_container(path: str | Path) -> tuple[FeatureSet, Manifest]:
    """Inverse of write_container; validates every invariant on load."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_BYTES:
        raise ContainerFormatError(f"file too short for header: {len(raw)} bytes")
    magic, version, n_samples, n_patches, dim, label_flag, class_count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported version {version}")
    if label_flag not in (0, 1):
        raise ContainerFormatError(f"label_flag must be 0 or 1, got {label_flag}")
    expected = expected_file_size(n_samples, n_patches, dim, bool(label_flag))
    if len(raw) != expected:
        raise ContainerFormatError(
            f"payload truncated or oversized: file is {len(raw)} bytes, "
            f"header implies {expected} (divergence at byte offset {min(len(raw), expected)})"
        )
    offset = HEADER_BYTES
    labels = None
    if label_flag:
        labels = np.frombuffer(raw, dtype="<i4", count=n_samples, offset=offset).copy()
        offset += 4 * n_samples
    feats = (
        np.frombuffer(raw, dtype="<f4", count=n_samples * dim, offset=offset)
        .reshape(n_samples, dim)
        .copy()
    )
    offset += 4 * n_samples * dim
    patches = None
    if n_patches:
        patches = (
            np.frombuffer(raw, dtype="<f4", count=n_samples * n_patches * dim, offset=offset)
            .reshape(n_samples, n_patches, dim)
            .copy()
        )

    sidecar_path = Path(str(path) + ".json")
    manifest = Manifest()
    domain_tag = ""
    class_names = None
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        manifest = Manifest.from_dict(sidecar)
        domain_tag = sidecar.get("domain_tag", "")
        class_names = sidecar.get("class_names")

    featset = FeatureSet(
        features=feats,
        patch_features=patches,
        labels=labels,
        domain_tag=domain_tag,
        class_names=class_names,
        n_classes=class_count if class_count > 0 else None,
        stats_fingerprint=manifest.extra.get("stats_fingerprint"),
    )
    featset.validate()
    if manifest.feature_family == "relu_nonneg":
        _check_nonneg(featset)
    return featset, manifest


def _check_nonneg(featset: FeatureSet) -> None:
    if featset.features.size and featset.features.min() < 0:
        idx = int(np.flatnonzero((featset.features < 0).any(axis=1))[0])
        raise ValidationError(
            f'feature_family "relu_nonneg" but sample {idx} has a negative pooled value'
        )
    if featset.patch_features is not None and featset.patch_features.size:
        neg = (featset.patch_features < 0).any(axis=(1, 2))
        if neg.any():
            idx = int(np.flatnonzero(neg)[0])
            raise ValidationError(
                f'feature_family "relu_nonneg" but sample {idx} has a negative patch value'
            )
