"""Base classifiers: CART-style decision trees with bagging, plus the two
voting baselines the learned fusion is compared against.

Trees are stored as parallel arrays indexed by node id.  Internal nodes
carry a feature index and threshold (samples with value <= threshold go
left); leaves carry feature index -1.  Every node records its majority
class so prediction can read one array regardless of node kind.

Split search is exhaustive over midpoints between consecutive distinct
sorted values of each candidate feature, scored by weighted Gini impurity
of the two children.  Ties keep the first candidate in (feature ascending,
threshold ascending) order, which pins tree shape for reproducibility.

Bagging draws n-with-replacement bootstrap resamples and restricts each
node's split search to ceil(sqrt(d)) features drawn fresh per node.  Each
tree's randomness comes from its own generator seeded with (seed, tree
index), so fitting order cannot change the result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .io_utils import atomic_write_text
from .tensor import ClassifierWeights, StackedPrediction

ENSEMBLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DecisionTree:
    """Axis-aligned binary classification tree over numeric features.

    feature[i] >= 0 marks an internal node with children left[i]/right[i];
    feature[i] == -1 marks a leaf.  majority[i] is the node's training
    majority class (ties to the lowest index) and is what leaves predict.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    majority: np.ndarray
    num_classes: int
    max_depth: int

    def __post_init__(self):
        n = self.feature.shape[0]
        for name in ("threshold", "left", "right", "majority"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per node")
        if n < 1:
            raise ValueError("tree must have at least one node")
        internal = self.feature >= 0
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if internal.any() and (kids.min() < 0 or kids.max() >= n):
            raise ValueError("internal node references a missing child")
        if np.any(self.majority < 0) or np.any(self.majority >= self.num_classes):
            raise ValueError("node majority class out of range")

    @property
    def num_nodes(self) -> int:
        return int(self.feature.shape[0])

    def predict(self, features) -> np.ndarray:
        """Predicted class index per row, by iterative descent from the root."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            live = np.nonzero(feat >= 0)[0]
            if live.size == 0:
                break
            at = node[live]
            goes_left = x[live, feat[live]] <= self.threshold[at]
            node[live] = np.where(goes_left, self.left[at], self.right[at])
        return self.majority[node].copy()


@dataclass(frozen=True)
class BaggedEnsemble:
    """k trees fitted on bootstrap resamples, with per-tree accuracy weights."""

    trees: tuple
    bootstrap_seed: int
    weights: ClassifierWeights
    max_depth: int
    min_leaf: int

    def __post_init__(self):
        if len(self.trees) < 1:
            raise ValueError("ensemble needs at least one tree")
        if self.weights.num_learners != len(self.trees):
            raise ValueError(
                f"{len(self.trees)} trees but {self.weights.num_learners} weights"
            )
        for tree in self.trees:
            if tree.num_classes != self.weights.num_classes:
                raise ValueError("trees disagree with weights on num_classes")

    @property
    def num_learners(self) -> int:
        return len(self.trees)

    @property
    def num_classes(self) -> int:
        return self.weights.num_classes


def _majority_class(labels: np.ndarray, num_classes: int) -> int:
    return int(np.bincount(labels, minlength=num_classes).argmax())


def _best_split(x: np.ndarray, labels: np.ndarray, num_classes: int, min_leaf: int):
    """Best (threshold, weighted child Gini) for one feature, or None.

    Sweeps all boundaries between consecutive distinct sorted values via
    cumulative one-hot class counts; boundaries leaving a child smaller
    than min_leaf are skipped.  Ties keep the smallest threshold.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    onehot = np.zeros((x.size, num_classes))
    onehot[np.arange(x.size), labels[order]] = 1.0
    cum = onehot.cumsum(axis=0)
    total = cum[-1]

    sizes_left = np.arange(1, x.size, dtype=np.float64)
    valid = xs[1:] > xs[:-1]
    valid &= (sizes_left >= min_leaf) & (x.size - sizes_left >= min_leaf)
    if not valid.any():
        return None

    left_counts = cum[:-1]
    right_counts = total - left_counts
    sizes_right = x.size - sizes_left
    gini_left = 1.0 - (left_counts**2).sum(axis=1) / sizes_left**2
    gini_right = 1.0 - (right_counts**2).sum(axis=1) / sizes_right**2
    score = (sizes_left * gini_left + sizes_right * gini_right) / x.size
    score[~valid] = np.inf
    best = int(score.argmin())
    threshold = 0.5 * (xs[best] + xs[best + 1])
    return threshold, float(score[best])


def fit_tree(
    features,
    labels,
    max_depth: int,
    min_leaf: int = 1,
    rng: np.random.Generator | None = None,
    feature_candidates: int | None = None,
    num_classes: int | None = None,
) -> DecisionTree:
    """Greedy CART fit minimizing weighted Gini impurity.

    Recursion stops only at max_depth, at a pure node, at a node smaller
    than 2 * min_leaf, or when no boundary between distinct values leaves
    both children with min_leaf samples.  A zero-gain best split is still
    taken when allowed, since both children are strictly smaller.

    feature_candidates, when smaller than d, restricts each node's search
    to that many features drawn without replacement from rng; bagging uses
    this for per-node subsampling.  With all features in play no random
    draw happens, so rng may be omitted.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("features must be a nonempty 2-d matrix")
    if y.shape != (x.shape[0],):
        raise ValueError(f"{x.shape[0]} rows but {y.shape} labels")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if y.min() < 0:
        raise ValueError("labels must be nonnegative class indices")
    if not (isinstance(max_depth, int) and max_depth >= 1):
        raise ValueError(f"max_depth must be a positive integer, got {max_depth}")
    if not (isinstance(min_leaf, int) and min_leaf >= 1):
        raise ValueError(f"min_leaf must be a positive integer, got {min_leaf}")
    c = int(y.max()) + 1 if num_classes is None else num_classes
    if y.max() >= c:
        raise ValueError(f"label {y.max()} out of range [0, {c})")
    d = x.shape[1]
    m = d if feature_candidates is None else min(feature_candidates, d)
    if m < 1:
        raise ValueError(f"feature_candidates must be >= 1, got {feature_candidates}")
    if m < d and rng is None:
        raise ValueError("feature subsampling requires an rng")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    majority: list[int] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        sub_y = y[idx]
        majority.append(_majority_class(sub_y, c))

        if depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        if (sub_y == sub_y[0]).all():
            return node

        if m < d:
            candidates = np.sort(rng.choice(d, size=m, replace=False))
        else:
            candidates = np.arange(d)
        best = None
        for f in candidates:
            found = _best_split(x[idx, f], sub_y, c, min_leaf)
            if found is None:
                continue
            thr, score = found
            if best is None or score < best[2]:
                best = (int(f), thr, score)
        if best is None:
            return node

        f, thr, _ = best
        goes_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[goes_left], depth + 1)
        right[node] = grow(idx[~goes_left], depth + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        majority=np.asarray(majority, dtype=np.int64),
        num_classes=c,
        max_depth=max_depth,
    )


def fit_bagged(
    features,
    labels,
    k: int,
    max_depth: int,
    min_leaf: int = 1,
    seed: int = 0,
    bootstrap: bool = True,
) -> BaggedEnsemble:
    """Fit k trees on bootstrap resamples with per-node feature subsampling.

    Each tree's accuracy on the full (not resampled) training set becomes
    its weight.  bootstrap=False is a test hook that trains every tree on
    the original data, leaving only the feature subsampling random.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if not (isinstance(k, int) and k >= 1):
        raise ValueError(f"k must be a positive integer, got {k}")
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("features must be a nonempty 2-d matrix")
    n, d = x.shape
    c = int(y.max()) + 1
    m = math.ceil(math.sqrt(d))

    trees = []
    accs = []
    for t in range(k):
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = fit_tree(
            x[idx],
            y[idx],
            max_depth=max_depth,
            min_leaf=min_leaf,
            rng=rng,
            feature_candidates=m,
            num_classes=c,
        )
        trees.append(tree)
        accs.append(float((tree.predict(x) == y).mean()))

    return BaggedEnsemble(
        trees=tuple(trees),
        bootstrap_seed=seed,
        weights=ClassifierWeights(np.asarray(accs), c),
        max_depth=max_depth,
        min_leaf=min_leaf,
    )


def stack_predictions(ensemble: BaggedEnsemble, features) -> list:
    """Per-sample vote vectors: entry t is tree t's predicted class."""
    x = np.asarray(features, dtype=np.float64)
    votes = np.stack([tree.predict(x) for tree in ensemble.trees], axis=1)
    c, k = ensemble.num_classes, ensemble.num_learners
    return [StackedPrediction(c, k, row) for row in votes]


def majority_vote(g: StackedPrediction) -> int:
    """Most common vote; ties go to the lowest class index."""
    counts = np.bincount(g.hot_indices, minlength=g.num_classes)
    return int(counts.argmax())


def weighted_vote(g: StackedPrediction, weights: ClassifierWeights) -> int:
    """Accuracy-weighted vote; ties go to the lowest class index.

    Agrees with predicting through the freshly initialized diagonal
    confidence tensor on every input, which is what makes that tensor a
    warm start rather than an arbitrary one.
    """
    if weights.num_learners != g.num_learners or weights.num_classes != g.num_classes:
        raise ValueError("weights and prediction disagree on (num_classes, num_learners)")
    scores = np.zeros(g.num_classes)
    np.add.at(scores, g.hot_indices, weights.weights)
    return int(scores.argmax())


def _tree_to_obj(tree: DecisionTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": [None if math.isnan(v) else v for v in tree.threshold.tolist()],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "majority": tree.majority.tolist(),
    }


def _tree_from_obj(obj: dict, num_classes: int, max_depth: int) -> DecisionTree:
    return DecisionTree(
        feature=np.asarray(obj["feature"], dtype=np.int64),
        threshold=np.asarray(
            [math.nan if v is None else float(v) for v in obj["threshold"]],
            dtype=np.float64,
        ),
        left=np.asarray(obj["left"], dtype=np.int64),
        right=np.asarray(obj["right"], dtype=np.int64),
        majority=np.asarray(obj["majority"], dtype=np.int64),
        num_classes=num_classes,
        max_depth=max_depth,
    )


def save_ensemble(ensemble: BaggedEnsemble, path) -> None:
    """Serialize to versioned JSON.  Thresholds round-trip exactly because
    shortest-repr float serialization is value-preserving for binary64."""
    obj = {
        "format_version": ENSEMBLE_FORMAT_VERSION,
        "num_classes": ensemble.num_classes,
        "bootstrap_seed": ensemble.bootstrap_seed,
        "max_depth": ensemble.max_depth,
        "min_leaf": ensemble.min_leaf,
        "weights": ensemble.weights.weights.tolist(),
        "trees": [_tree_to_obj(t) for t in ensemble.trees],
    }
    atomic_write_text(path, json.dumps(obj, indent=1) + "\n")


def load_ensemble(path) -> BaggedEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    version = obj.get("format_version")
    if version != ENSEMBLE_FORMAT_VERSION:
        raise ValueError(
            f"unsupported ensemble format_version {version!r}, "
            f"expected {ENSEMBLE_FORMAT_VERSION}"
        )
    c = int(obj["num_classes"])
    return BaggedEnsemble(
        trees=tuple(
            _tree_from_obj(t, c, int(obj["max_depth"])) for t in obj["trees"]
        ),
        bootstrap_seed=int(obj["bootstrap_seed"]),
        weights=ClassifierWeights(np.asarray(obj["weights"], dtype=np.float64), c),
        max_depth=int(obj["max_depth"]),
        min_leaf=int(obj["min_leaf"]),
    )
