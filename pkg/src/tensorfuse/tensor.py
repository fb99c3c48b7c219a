"""Confidence tensor core: storage, initialization, fusion, and prediction.

The learnable object is a stack of k square confidence matrices, one per
base classifier, kept unfolded as a single dense c x (k*c) matrix so that
fusing an ensemble's votes is one (sparse) matrix-vector product.  Column
t*c + v of the matrix is the evidence vector contributed when classifier t
votes for class v; entry (r, v) of slice t is classifier t's confidence of
assigning class r when it votes v.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .io_utils import atomic_write_text


def expand_weights(weights, num_classes: int) -> np.ndarray:
    """Repeat each per-classifier weight `num_classes` times.

    The result is the column-sum target for the unfolded tensor: every
    column of classifier t's slice must sum to weights[t].
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a nonempty 1-d vector")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    return np.repeat(w, num_classes)


@dataclass(frozen=True)
class ClassifierWeights:
    """Per-classifier accuracy weights and their block-expanded form."""

    weights: np.ndarray
    num_classes: int
    expanded: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty 1-d vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("every weight must lie in [0, 1]")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "expanded", expand_weights(w, self.num_classes))

    @property
    def num_learners(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class StackedPrediction:
    """One-hot votes of all k base classifiers for a single sample.

    Stored sparsely as the per-classifier predicted class indices; the
    dense realization is a k*c vector with exactly one 1 per c-block.
    """

    num_classes: int
    num_learners: int
    hot_indices: np.ndarray

    def __post_init__(self):
        hot = np.asarray(self.hot_indices, dtype=np.int64)
        if self.num_classes < 2 or self.num_learners < 1:
            raise ValueError("need num_classes >= 2 and num_learners >= 1")
        if hot.shape != (self.num_learners,):
            raise ValueError(
                f"expected {self.num_learners} votes, got shape {hot.shape}"
            )
        if np.any(hot < 0) or np.any(hot >= self.num_classes):
            raise ValueError(f"vote index out of range [0, {self.num_classes})")
        object.__setattr__(self, "hot_indices", hot)

    def dense(self) -> np.ndarray:
        """Dense k*c vote vector: block t carries a 1 at hot_indices[t]."""
        g = np.zeros(self.num_learners * self.num_classes, dtype=np.float64)
        flat = np.arange(self.num_learners) * self.num_classes + self.hot_indices
        g[flat] = 1.0
        return g


@dataclass
class ConfidenceTensor:
    """Unfolded c x (k*c) confidence matrix.

    Treat instances as immutable after construction; the optimizer produces
    new instances rather than mutating in place, so read-only use from
    multiple threads is safe.
    """

    num_classes: int
    num_learners: int
    theta: np.ndarray

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_learners < 1:
            raise ValueError(f"num_learners must be >= 1, got {self.num_learners}")
        th = np.asarray(self.theta, dtype=np.float64)
        expected = (self.num_classes, self.num_learners * self.num_classes)
        if th.shape != expected:
            raise ValueError(f"theta must have shape {expected}, got {th.shape}")
        if not np.all(np.isfinite(th)):
            raise ValueError("theta entries must all be finite")
        self.theta = th

    def column_sums(self) -> np.ndarray:
        return self.theta.sum(axis=0)

    def slice_view(self, t: int) -> np.ndarray:
        """Copy of classifier t's c x c confidence matrix."""
        if not 0 <= t < self.num_learners:
            raise IndexError(
                f"learner index {t} out of range [0, {self.num_learners})"
            )
        c = self.num_classes
        return self.theta[:, t * c : (t + 1) * c].copy()

    @classmethod
    def from_slices(cls, slices) -> "ConfidenceTensor":
        """Refold a list of k square slices into the unfolded matrix."""
        mats = [np.asarray(s, dtype=np.float64) for s in slices]
        if not mats:
            raise ValueError("need at least one slice")
        c = mats[0].shape[0]
        for s in mats:
            if s.shape != (c, c):
                raise ValueError("all slices must be square with equal size")
        return cls(c, len(mats), np.hstack(mats))


def init_confidence_tensor(
    weights: ClassifierWeights, num_classes: int
) -> ConfidenceTensor:
    """Diagonal warm start: slice t is weights[t] times the identity.

    Every column of slice t then sums to weights[t] exactly, and prediction
    with the fresh tensor coincides with accuracy-weighted voting, so
    training starts from the weighted-vote baseline rather than from noise.
    """
    if num_classes != weights.num_classes:
        raise ValueError(
            f"num_classes {num_classes} disagrees with weights ({weights.num_classes})"
        )
    k = weights.num_learners
    eye = np.eye(num_classes)
    theta = np.hstack([w * eye for w in weights.weights])
    return ConfidenceTensor(num_classes, k, theta)


def _check_compatible(theta: ConfidenceTensor, g: StackedPrediction) -> None:
    if theta.num_classes != g.num_classes or theta.num_learners != g.num_learners:
        raise ValueError(
            f"tensor is ({theta.num_classes} classes, {theta.num_learners} learners), "
            f"votes are ({g.num_classes}, {g.num_learners})"
        )


def fuse(theta: ConfidenceTensor, g: StackedPrediction) -> np.ndarray:
    """Class-evidence vector for one sample: sum of the voted columns.

    Equivalent to the dense matrix-vector product with g's dense form, but
    touches only the k active columns.
    """
    _check_compatible(theta, g)
    c = theta.num_classes
    cols = np.arange(theta.num_learners) * c + g.hot_indices
    return theta.theta[:, cols].sum(axis=1)


def predict(theta: ConfidenceTensor, g: StackedPrediction) -> int:
    """Fused class decision; ties go to the lowest class index.

    Softmax is strictly monotone, so the argmax of the fused evidence
    equals the argmax of its softmax.
    """
    return int(np.argmax(fuse(theta, g)))


def save_tensor(theta: ConfidenceTensor, weights: ClassifierWeights, path: str) -> None:
    """Serialize tensor + weights as JSON, lossless at full double precision."""
    if (
        weights.num_classes != theta.num_classes
        or weights.num_learners != theta.num_learners
    ):
        raise ValueError("weights do not match the tensor's dimensions")
    doc = {
        "c": theta.num_classes,
        "k": theta.num_learners,
        "w": weights.weights.tolist(),
        "theta": theta.theta.ravel().tolist(),
    }
    atomic_write_text(path, json.dumps(doc) + "\n")


def load_tensor(path: str) -> tuple[ConfidenceTensor, ClassifierWeights]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    c, k = int(doc["c"]), int(doc["k"])
    weights = ClassifierWeights(np.asarray(doc["w"], dtype=np.float64), c)
    theta = np.asarray(doc["theta"], dtype=np.float64).reshape(c, k * c)
    return ConfidenceTensor(c, k, theta), weights
