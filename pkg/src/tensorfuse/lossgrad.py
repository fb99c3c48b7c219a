"""Margin-augmented cross-entropy loss over fused votes, with its analytic gradient.

The objective per sample is

    -log s[m] - gamma * s[m] + gamma * smoothmax(s with entry m zeroed)

where s is the softmax of the fused evidence, m the true class, and
smoothmax the log-sum-exp approximation of the maximum with sharpness
alpha.  The first term is plain cross-entropy; the remaining two subtract
gamma times a smooth margin (true-class probability minus a soft second
maximum), rewarding confident correct decisions.  At gamma = 0 the whole
thing collapses to cross-entropy.

Zeroing the true-class entry before the smooth max means that position
contributes exp(0) = 1 inside the sum; the gradient code keeps the same
convention so the two stay consistent.

A key structural fact, relied on by the optimizer: every column of the
gradient with respect to the unfolded confidence matrix sums to zero.  The
per-sample gradient is an outer product of a vector dz with the sparse
vote vector, and dz always sums to zero because it has the form
s * (u - <u, s>) plus (s - onehot).  Gradient steps therefore never change
column sums, which is what lets plain gradient descent respect the
column-sum constraint without any projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import ConfidenceTensor, StackedPrediction

_MIDPOINT_SLACK = 1e-10


@dataclass(frozen=True)
class LossParams:
    """Hyperparameters: smooth-max sharpness alpha and margin weight gamma."""

    alpha: float = 10.0
    gamma: float = 5.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be a positive real, got {self.alpha}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


class Batch:
    """Stacked predictions plus true labels for one or more samples.

    Validates once at construction and caches the (n, k) matrix of vote
    indices so repeated loss/gradient evaluations stay cheap.
    """

    def __init__(self, predictions, labels):
        preds = list(predictions)
        labels = np.asarray(labels, dtype=np.int64)
        if len(preds) < 1:
            raise ValueError("batch must contain at least one sample")
        if labels.shape != (len(preds),):
            raise ValueError(
                f"{len(preds)} predictions but {labels.shape} labels"
            )
        c, k = preds[0].num_classes, preds[0].num_learners
        for p in preds:
            if p.num_classes != c or p.num_learners != k:
                raise ValueError("all predictions must share (num_classes, num_learners)")
        if np.any(labels < 0) or np.any(labels >= c):
            raise ValueError(f"label out of range [0, {c})")
        self.num_classes = c
        self.num_learners = k
        self.hot_matrix = np.stack([p.hot_indices for p in preds])
        self.labels = labels

    @classmethod
    def _from_arrays(cls, hot_matrix, labels, num_classes, num_learners):
        # internal fast path: caller guarantees validity
        obj = cls.__new__(cls)
        obj.num_classes = num_classes
        obj.num_learners = num_learners
        obj.hot_matrix = hot_matrix
        obj.labels = labels
        return obj

    def __len__(self) -> int:
        return int(self.labels.size)

    def subset(self, indices) -> "Batch":
        idx = np.asarray(indices, dtype=np.int64)
        return Batch._from_arrays(
            self.hot_matrix[idx], self.labels[idx], self.num_classes, self.num_learners
        )


def softmax(v) -> np.ndarray:
    """Probability vector proportional to exp(v), computed with max-shift.

    Shifting by the maximum keeps every exponent <= 0, so arbitrarily large
    inputs cannot overflow, and adding a constant to all entries leaves the
    shifted values (hence the output) unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input must be finite")
    e = np.exp(v - v.max())
    return e / e.sum()


def logsumexp(v, alpha: float) -> float:
    """Smooth maximum: log(sum(exp(alpha * v))) / alpha, max-shifted.

    Always lies in [max(v), max(v) + log(len(v)) / alpha], so large alpha
    pins it to the true maximum.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("logsumexp input must be finite")
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be a positive real, got {alpha}")
    a = alpha * v
    m = a.max()
    return float((m + np.log(np.exp(a - m).sum())) / alpha)


def margin_given_probs(s, label: int, alpha: float) -> float:
    """Smooth margin of a probability vector: s[label] minus the soft
    maximum of s with the label entry zeroed.

    The zeroed entry still contributes exp(0) = 1 inside the soft max, so
    the margin is never larger than s[label] itself.
    """
    s = np.asarray(s, dtype=np.float64)
    masked = s.copy()
    masked[label] = 0.0
    return float(s[label] - logsumexp(masked, alpha))


def sample_margin(
    theta: ConfidenceTensor, g: StackedPrediction, label: int, alpha: float
) -> float:
    """Smooth margin of one sample's fused prediction at the true class."""
    from .tensor import fuse

    if not 0 <= label < theta.num_classes:
        raise ValueError(f"label {label} out of range [0, {theta.num_classes})")
    return margin_given_probs(softmax(fuse(theta, g)), label, alpha)


def loss_given_probs(s, label: int, params: LossParams) -> float:
    """Per-sample objective evaluated directly on a probability vector.

    This is the function whose convexity in s the probe below checks; the
    full loss composes it with the (non-convex) softmax of the fused votes.
    """
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(divide="ignore"):
        ce = -np.log(s[label])
    return float(ce - params.gamma * margin_given_probs(s, label, params.alpha))


def _column_indices(hot_matrix: np.ndarray, num_classes: int) -> np.ndarray:
    # (n, k) flat column index of each classifier's voted column
    k = hot_matrix.shape[1]
    return np.arange(k, dtype=np.int64) * num_classes + hot_matrix


def _fused_scores(theta: ConfidenceTensor, batch: Batch) -> np.ndarray:
    # (c, n) fused evidence, exploiting one active column per classifier
    cols = _column_indices(batch.hot_matrix, batch.num_classes)
    return theta.theta[:, cols].sum(axis=2)


def _check_dims(theta: ConfidenceTensor, batch: Batch) -> None:
    if (
        theta.num_classes != batch.num_classes
        or theta.num_learners != batch.num_learners
    ):
        raise ValueError(
            f"tensor is ({theta.num_classes}, {theta.num_learners}), "
            f"batch is ({batch.num_classes}, {batch.num_learners})"
        )


def loss(theta: ConfidenceTensor, batch: Batch, params: LossParams) -> float:
    """Total objective, summed (not averaged) over the batch."""
    _check_dims(theta, batch)
    z = _fused_scores(theta, batch)
    n = len(batch)
    ar = np.arange(n)
    shifted = z - z.max(axis=0)
    log_sm = shifted - np.log(np.exp(shifted).sum(axis=0))
    total = float(-log_sm[batch.labels, ar].sum())
    if params.gamma > 0.0:
        s = np.exp(log_sm)
        true_p = s[batch.labels, ar]
        masked = s.copy()
        masked[batch.labels, ar] = 0.0
        a = params.alpha * masked
        m = a.max(axis=0)
        lse = (m + np.log(np.exp(a - m).sum(axis=0))) / params.alpha
        total += float(params.gamma * (lse.sum() - true_p.sum()))
    return total


def gradient(theta: ConfidenceTensor, batch: Batch, params: LossParams) -> np.ndarray:
    """Analytic gradient of `loss` with respect to the unfolded matrix.

    Per sample the gradient is dz (outer) g with g the sparse vote vector,
    so only the k voted columns receive contributions; dz sums to zero by
    construction, hence so does every column of the result.
    """
    _check_dims(theta, batch)
    c, k = batch.num_classes, batch.num_learners
    n = len(batch)
    ar = np.arange(n)
    z = _fused_scores(theta, batch)
    shifted = z - z.max(axis=0)
    e = np.exp(shifted)
    s = e / e.sum(axis=0)

    # cross-entropy part: softmax minus one-hot truth
    dz = s.copy()
    dz[batch.labels, ar] -= 1.0

    if params.gamma > 0.0:
        # margin part, via d(loss)/d(s) = u folded through the softmax
        # Jacobian: dz += s * (u - <u, s>).  Max-shift keeps exp(alpha * s)
        # safe for any alpha; the zeroed true-class entry contributes the
        # constant 1 term of the soft-max denominator.
        a = params.alpha * s
        a[batch.labels, ar] = 0.0
        m = a.max(axis=0)
        exp_a = np.exp(a - m)
        denom = exp_a.sum(axis=0)
        u = params.gamma * exp_a / denom
        u[batch.labels, ar] = -params.gamma
        dz += s * (u - (u * s).sum(axis=0))

    cols = _column_indices(batch.hot_matrix, c)
    grad_t = np.zeros((k * c, c))
    np.add.at(grad_t, cols.ravel(), np.repeat(dz.T, k, axis=0))
    return grad_t.T


def fd_gradient(
    theta: ConfidenceTensor, batch: Batch, params: LossParams, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient, one entry at a time.  Test oracle only.

    Costs two loss evaluations per tensor entry; keep it away from
    production paths.
    """
    if not 1e-8 <= step <= 1e-2:
        raise ValueError(f"step must lie in [1e-8, 1e-2], got {step}")
    _check_dims(theta, batch)
    work = ConfidenceTensor(
        theta.num_classes, theta.num_learners, theta.theta.copy()
    )
    th = work.theta
    out = np.zeros_like(th)
    for r in range(th.shape[0]):
        for col in range(th.shape[1]):
            orig = th[r, col]
            th[r, col] = orig + step
            up = loss(work, batch, params)
            th[r, col] = orig - step
            down = loss(work, batch, params)
            th[r, col] = orig
            out[r, col] = (up - down) / (2.0 * step)
    return out


def _validate_prob_vector(s, name: str) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError(f"{name} must be a 1-d vector of length >= 2")
    if not np.all(np.isfinite(s)):
        raise ValueError(f"{name} must be finite")
    if np.any(s < -1e-12) or abs(s.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} is not a probability vector")
    return np.clip(s, 0.0, None)


def convexity_probe(
    s0, s1, label: int, params: LossParams, num_points: int = 9
) -> bool:
    """Check midpoint convexity of the per-sample objective along a segment
    in probability space.

    Evaluates at `num_points` equally spaced points between s0 and s1 and
    requires every interior point to sit at or below the average of its
    neighbors, within a small slack for floating-point noise.
    """
    s0 = _validate_prob_vector(s0, "s0")
    s1 = _validate_prob_vector(s1, "s1")
    if s0.shape != s1.shape:
        raise ValueError("s0 and s1 must have equal length")
    if not 0 <= label < s0.size:
        raise ValueError(f"label {label} out of range [0, {s0.size})")
    if num_points < 3:
        raise ValueError(f"num_points must be >= 3, got {num_points}")
    lam = np.linspace(0.0, 1.0, num_points)
    values = np.array(
        [loss_given_probs((1.0 - t) * s0 + t * s1, label, params) for t in lam]
    )
    mids = values[1:-1]
    neighbor_avg = 0.5 * (values[:-2] + values[2:])
    return bool(np.all(mids <= neighbor_avg + _MIDPOINT_SLACK))
