"""Dataset construction and ingestion.

Synthetic generators (a two-class double ring and multi-class Gaussian
blobs), CSV load/save, a plain-text format for externally produced
classifier votes, and a deterministic stratified train/test split.

Everything here is a pure function of its arguments and seed; datasets
are validated on construction and immutable afterwards.  All failures
that stem from user-supplied files or impossible sizes raise DataError so
the command line can map them to one documented exit code.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .io_utils import atomic_write_text, fmt_float
from .tensor import StackedPrediction

RING_INNER_RADIUS = 1.0
RING_OUTER_RADIUS = 2.0
DEFAULT_RING_NOISE = 0.15

# guards the per-class train allocation against products like 5 * 0.8
# landing just below their exact value in binary floating point
_FRACTION_EPS = 1e-12


class DataError(Exception):
    """A dataset could not be built from the given source or sizes."""


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer class labels.

    Every class in [0, num_classes) must actually occur: downstream
    accuracy weights and stratified splitting are meaningless for phantom
    classes.  label_names, when present, records the original label tokens
    in index order; feature_names likewise for columns.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_names: Optional[tuple] = None
    label_names: Optional[tuple] = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError("features must be a nonempty 2-d matrix")
        if not np.all(np.isfinite(x)):
            raise DataError("features must be finite")
        if y.shape != (x.shape[0],):
            raise DataError(f"{x.shape[0]} rows but {y.shape} labels")
        c = self.num_classes
        if not (isinstance(c, int) and c >= 2):
            raise DataError(f"num_classes must be an integer >= 2, got {c}")
        if x.shape[0] < c:
            raise DataError(f"{x.shape[0]} samples cannot cover {c} classes")
        present = np.unique(y)
        if present.min() < 0 or present.max() >= c:
            raise DataError(f"labels must lie in [0, {c})")
        if present.size != c:
            missing = sorted(set(range(c)) - set(present.tolist()))
            raise DataError(f"classes {missing} never occur")
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise DataError("feature_names length must match feature count")
        if self.label_names is not None and len(self.label_names) != c:
            raise DataError("label_names length must match num_classes")

    @property
    def num_samples(self) -> int:
        return int(self.labels.size)

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class SplitDataset:
    train: LabeledDataset
    test: LabeledDataset
    split_seed: int


def generate_double_ring(
    n: int, noise: float = DEFAULT_RING_NOISE, seed: int = 0
) -> LabeledDataset:
    """Two concentric rings in the plane: class 0 at radius 1, class 1 at
    radius 2, with the given absolute radial noise standard deviation.

    Angles are uniform, so neither class is axis-separable; shallow
    axis-aligned trees have to approximate the circles with boxes, which
    keeps the task honest for an ensemble of weak learners.
    """
    if not (isinstance(n, int) and n >= 4):
        raise DataError(f"double ring needs n >= 4, got {n}")
    if not (isinstance(noise, (int, float)) and math.isfinite(noise) and noise >= 0):
        raise DataError(f"noise must be a nonnegative real, got {noise}")
    rng = np.random.default_rng(seed)
    counts = (n // 2, n - n // 2)
    radii = (RING_INNER_RADIUS, RING_OUTER_RADIUS)
    xs, ys = [], []
    for cls, (count, base) in enumerate(zip(counts, radii)):
        angle = rng.uniform(0.0, 2.0 * math.pi, size=count)
        r = base + noise * rng.standard_normal(count)
        xs.append(np.column_stack([r * np.cos(angle), r * np.sin(angle)]))
        ys.append(np.full(count, cls, dtype=np.int64))
    return LabeledDataset(
        features=np.vstack(xs),
        labels=np.concatenate(ys),
        num_classes=2,
        feature_names=("x", "y"),
    )


def generate_blobs(
    n: int, num_classes: int = 3, dims: int = 2, spread: float = 1.0, seed: int = 0
) -> LabeledDataset:
    """Gaussian clusters at distinct axis-aligned centers, labels cycling
    through the classes so counts differ by at most one."""
    if not (isinstance(num_classes, int) and num_classes >= 2):
        raise DataError(f"blobs need num_classes >= 2, got {num_classes}")
    if not (isinstance(dims, int) and dims >= 2):
        raise DataError(f"blobs need dims >= 2, got {dims}")
    if not (isinstance(n, int) and n >= num_classes):
        raise DataError(f"blobs need n >= num_classes, got n={n}")
    if not (isinstance(spread, (int, float)) and math.isfinite(spread) and spread >= 0):
        raise DataError(f"spread must be a nonnegative real, got {spread}")
    rng = np.random.default_rng(seed)
    centers = np.zeros((num_classes, dims))
    for j in range(num_classes):
        centers[j, j % dims] = 3.0 * (1 + j // dims)
    labels = np.arange(n, dtype=np.int64) % num_classes
    features = centers[labels] + spread * rng.standard_normal((n, dims))
    return LabeledDataset(
        features=features,
        labels=labels,
        num_classes=num_classes,
        feature_names=tuple(f"f{i}" for i in range(dims)),
    )


def load_csv(path, label_column, header: bool = True) -> LabeledDataset:
    """Read a delimited file into a dataset.

    The label column is selected by name (requires a header) or by
    0-based index.  Distinct label tokens become class indices in order of
    first appearance, and that mapping is kept on the dataset for
    reporting.  Any non-numeric feature cell or ragged row is reported
    with its 1-based line number.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, row) for i, row in enumerate(rows) if row]
    if not rows:
        raise DataError(f"{path} contains no data")

    names = None
    if header:
        _, head = rows[0]
        names = [cell.strip() for cell in head]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path} contains a header but no data rows")

    width = len(rows[0][1])
    if isinstance(label_column, str):
        if names is not None and label_column in names:
            label_idx = names.index(label_column)
        elif label_column.lstrip("-").isdigit():
            # a purely numeric selector that matches no header name is an index
            label_idx = int(label_column)
            if not 0 <= label_idx < width:
                raise DataError(
                    f"label column index {label_idx} out of range for {width} columns"
                )
        elif names is None:
            raise DataError("label column by name requires a header row")
        else:
            raise DataError(f"label column {label_column!r} not in header {names}")
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < width:
            raise DataError(
                f"label column index {label_idx} out of range for {width} columns"
            )

    feature_cols = [j for j in range(width) if j != label_idx]
    if not feature_cols:
        raise DataError("file has no feature columns besides the label")
    features = []
    tokens = []
    for line_no, row in rows:
        if len(row) != width:
            raise DataError(
                f"row at line {line_no} has {len(row)} cells, expected {width}"
            )
        vals = []
        for j in feature_cols:
            cell = row[j].strip()
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(
                    f"non-numeric feature cell {cell!r} at line {line_no}, "
                    f"column {j}"
                ) from None
        features.append(vals)
        tokens.append(row[label_idx].strip())

    mapping: dict = {}
    labels = []
    for tok in tokens:
        if tok not in mapping:
            mapping[tok] = len(mapping)
        labels.append(mapping[tok])
    if len(mapping) < 2:
        raise DataError(f"{path} contains a single label value; nothing to classify")

    return LabeledDataset(
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=len(mapping),
        feature_names=tuple(names[j] for j in feature_cols) if names else None,
        label_names=tuple(mapping.keys()),
    )


def save_csv(dataset: LabeledDataset, path, label_column_name: str = "label") -> None:
    """Write a dataset with a header row; floats use shortest round-trip
    representation so a reload reproduces them bit for bit."""
    names = dataset.feature_names or tuple(
        f"f{i}" for i in range(dataset.num_features)
    )
    lines = [",".join(list(names) + [label_column_name])]
    for row, label in zip(dataset.features, dataset.labels):
        cells = [fmt_float(v) for v in row]
        if dataset.label_names is not None:
            cells.append(str(dataset.label_names[label]))
        else:
            cells.append(str(int(label)))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_external_predictions(path, num_classes: int, num_learners: int):
    """Read one sample per line: num_learners vote indices then the true
    label, separated by commas or whitespace.

    Returns (list of StackedPrediction, label array).  Lets externally
    produced classifier votes flow into tensor training without this
    package ever seeing the underlying models.
    """
    if not (isinstance(num_classes, int) and num_classes >= 2):
        raise DataError(f"num_classes must be an integer >= 2, got {num_classes}")
    if not (isinstance(num_learners, int) and num_learners >= 1):
        raise DataError(f"num_learners must be a positive integer, got {num_learners}")
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    predictions = []
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.replace(",", " ").split()
            if len(parts) != num_learners + 1:
                raise DataError(
                    f"line {line_no} has {len(parts)} fields, "
                    f"expected {num_learners + 1} (votes plus label)"
                )
            try:
                values = [int(p) for p in parts]
            except ValueError:
                raise DataError(f"non-integer field at line {line_no}") from None
            votes, label = values[:-1], values[-1]
            if any(not 0 <= v < num_classes for v in votes):
                raise DataError(
                    f"vote out of range [0, {num_classes}) at line {line_no}"
                )
            if not 0 <= label < num_classes:
                raise DataError(
                    f"label out of range [0, {num_classes}) at line {line_no}"
                )
            predictions.append(
                StackedPrediction(num_classes, num_learners, np.asarray(votes))
            )
            labels.append(label)
    if not predictions:
        raise DataError(f"{path} contains no prediction rows")
    return predictions, np.asarray(labels, dtype=np.int64)


def save_external_predictions(predictions, labels, path) -> None:
    lines = []
    for pred, label in zip(predictions, labels):
        lines.append(" ".join(str(int(v)) for v in pred.hot_indices) + f" {int(label)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def infer_prediction_shape(path):
    """(num_classes, num_learners) implied by a vote file: learner count
    from the first row's width, class count from the largest index seen."""
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    num_learners = None
    largest = -1
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.replace(",", " ").split()
            if num_learners is None:
                if len(parts) < 2:
                    raise DataError(
                        f"line {line_no} has {len(parts)} fields; need at least "
                        "one vote plus a label"
                    )
                num_learners = len(parts) - 1
            try:
                largest = max(largest, max(int(p) for p in parts))
            except ValueError:
                raise DataError(f"non-integer field at line {line_no}") from None
    if num_learners is None:
        raise DataError(f"{path} contains no prediction rows")
    return max(largest + 1, 2), num_learners


def stratified_split_indices(labels, num_classes: int, train_fraction: float, seed: int):
    """Disjoint (train, test) index arrays, stratified by class.

    Each class contributes ceil(count * fraction) samples to train (the
    fractional remainder goes to train), drawn in deterministic shuffled
    order.  A class too small to land on both sides is an error rather
    than a silent invariant break.
    """
    y = np.asarray(labels, dtype=np.int64)
    if not (
        isinstance(train_fraction, (int, float))
        and math.isfinite(train_fraction)
        and 0.0 < train_fraction < 1.0
    ):
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if y.size < 2:
        raise DataError("cannot split fewer than two samples")
    if y.min() < 0 or y.max() >= num_classes:
        raise DataError(f"labels must lie in [0, {num_classes})")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(y.size)
    train_parts, test_parts = [], []
    # iterate only classes that occur: vote files may name classes that
    # never appear as true labels, and those have nothing to stratify
    for cls in np.unique(y):
        members = perm[y[perm] == cls]
        count = members.size
        if count < 2:
            raise DataError(
                f"class {cls} has {count} sample(s) and cannot be split; "
                "merge it with another class or drop it"
            )
        take = math.ceil(count * train_fraction - _FRACTION_EPS)
        if take >= count or take < 1:
            raise DataError(
                f"class {cls} with {count} samples gets no "
                f"{'test' if take >= count else 'train'} allocation at "
                f"fraction {train_fraction}; add samples or change the fraction"
            )
        train_parts.append(members[:take])
        test_parts.append(members[take:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return train_idx, test_idx


def split(dataset: LabeledDataset, train_fraction: float = 0.8, seed: int = 0) -> SplitDataset:
    """Stratified train/test split, deterministic in the seed."""
    train_idx, test_idx = stratified_split_indices(
        dataset.labels, dataset.num_classes, train_fraction, seed
    )

    def take(idx):
        return LabeledDataset(
            features=dataset.features[idx],
            labels=dataset.labels[idx],
            num_classes=dataset.num_classes,
            feature_names=dataset.feature_names,
            label_names=dataset.label_names,
        )

    return SplitDataset(train=take(train_idx), test=take(test_idx), split_seed=seed)
