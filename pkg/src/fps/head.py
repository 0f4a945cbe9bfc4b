"""Linear decision head with a source plane and a perturbed target plane.

Source-domain samples are always scored with (W, b); target-domain samples
with (W + dW, b + db), where the perturbation pair lets the target plane
diverge boundedly from the source plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import FeatureSet
from .errors import ValidationError


@dataclass
class DecisionHead:
    W: np.ndarray
    b: np.ndarray
    dW: np.ndarray = field(default=None)  # type: ignore[assignment]
    db: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ValidationError(f"W must be (d, C) and b (C,); got {self.W.shape}, {self.b.shape}")
        self.dW = np.zeros_like(self.W) if self.dW is None else np.asarray(self.dW, np.float64)
        self.db = np.zeros_like(self.b) if self.db is None else np.asarray(self.db, np.float64)
        if self.dW.shape != self.W.shape or self.db.shape != self.b.shape:
            raise ValidationError("perturbation shapes must match W and b")
        for name in ("W", "b", "dW", "db"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValidationError(f"non-finite entries in {name}")

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, dim: int, n_classes: int) -> "DecisionHead":
        return cls(W=np.zeros((dim, n_classes)), b=np.zeros(n_classes))

    def copy(self) -> "DecisionHead":
        return DecisionHead(self.W.copy(), self.b.copy(), self.dW.copy(), self.db.copy())

    def to_json(self) -> str:
        """Serialize as JSON; float values round-trip exactly (repr encoding)."""
        doc = {
            "dim": self.dim,
            "n_classes": self.n_classes,
            "W": self.W.ravel().tolist(),
            "b": self.b.tolist(),
            "dW": self.dW.ravel().tolist(),
            "db": self.db.tolist(),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DecisionHead":
        doc = json.loads(text)
        d, c = int(doc["dim"]), int(doc["n_classes"])
        return cls(
            W=np.array(doc["W"], dtype=np.float64).reshape(d, c),
            b=np.array(doc["b"], dtype=np.float64),
            dW=np.array(doc["dW"], dtype=np.float64).reshape(d, c),
            db=np.array(doc["db"], dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DecisionHead":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _check_dim(head: DecisionHead, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != head.dim:
        raise ValidationError(f"feature dim {x.shape[-1]} does not match head dim {head.dim}")
    return x


def logits_source(head: DecisionHead, x: np.ndarray) -> np.ndarray:
    """W^T x + b for one d-vector or a stack of rows."""
    x = _check_dim(head, x)
    return x @ head.W + head.b


def logits_target(head: DecisionHead, x: np.ndarray) -> np.ndarray:
    """(W + dW)^T x + (b + db); reduces to logits_source at zero perturbation."""
    x = _check_dim(head, x)
    return x @ (head.W + head.dW) + (head.b + head.db)


def softmax(y: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; invariant to constant shifts."""
    y = np.asarray(y, dtype=np.float64)
    shifted = y - y.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict(head: DecisionHead, featset: FeatureSet, use_target_plane: bool) -> np.ndarray:
    """Argmax class per sample; ties break toward the lowest class index."""
    logits_fn = logits_target if use_target_plane else logits_source
    y = logits_fn(head, featset.features)
    return np.argmax(y, axis=1).astype(np.int64)


def accuracy(head: DecisionHead, featset: FeatureSet, use_target_plane: bool) -> float:
    """Fraction of labeled samples predicted correctly."""
    if featset.labels is None:
        raise ValidationError("accuracy requires labels")
    pred = predict(head, featset, use_target_plane)
    return float(np.mean(pred == featset.labels))
