"""Constraint-preserving gradient descent over the confidence tensor.

Plain descent steps, theta <- theta - beta * grad, with one refinement: a
per-step backtracking halving of beta.  A step is accepted only if it does
not increase the loss measured on the full dataset; otherwise beta is
halved, up to 30 times.  If no tried scale is acceptable the step is
rejected and theta kept, which makes the recorded loss history
non-increasing and lets the relative-change stopping rule fire on the next
check.

No projection or renormalization appears anywhere in this module.  The
gradient's columns each sum to zero, so every step leaves the column sums
of theta untouched up to floating-point addition error; the constraint
residual is recorded each iteration precisely so tests can verify that
claim instead of having a repair step silently mask a gradient bug.

Batch modes: batch_size "full" uses every sample per step; an integer
selects that many samples uniformly without replacement, fresh each
iteration.  The stopping rule always evaluates the full dataset, so noisy
batch losses never terminate a run by accident.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .lossgrad import Batch, LossParams, gradient, loss
from .tensor import ClassifierWeights, ConfidenceTensor, init_confidence_tensor

_MAX_HALVINGS = 30


class DivergenceError(RuntimeError):
    """Training encountered a non-finite loss or gradient."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Step size, iteration budget, batch mode, stopping tolerance, seed."""

    learning_rate: float = 0.1
    max_iters: int = 200
    batch_size: Union[int, str] = "full"
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError(
                f"learning_rate must be a positive real, got {self.learning_rate}"
            )
        if not (isinstance(self.max_iters, int) and self.max_iters >= 1):
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if isinstance(self.batch_size, str):
            if self.batch_size != "full":
                raise ValueError(
                    f'batch_size must be "full" or a positive integer, got {self.batch_size!r}'
                )
        elif not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise ValueError(
                f'batch_size must be "full" or a positive integer, got {self.batch_size!r}'
            )
        if not (math.isfinite(self.tolerance) and self.tolerance > 0):
            raise ValueError(f"tolerance must be a positive real, got {self.tolerance}")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass(frozen=True)
class TrainReport:
    """Outcome of one training run.

    loss_history and constraint_residuals both have iterations_run + 1
    entries; index 0 describes the freshly initialized tensor.  Residuals
    are max-abs deviations of the column sums from the expanded weight
    vector, recorded so the no-drift property is checkable after the fact.
    """

    final_theta: ConfidenceTensor
    loss_history: np.ndarray
    constraint_residuals: np.ndarray
    iterations_run: int
    converged: bool

    def __post_init__(self):
        expected = self.iterations_run + 1
        if self.loss_history.shape != (expected,):
            raise ValueError(
                f"loss_history has {self.loss_history.shape[0]} entries, "
                f"expected {expected}"
            )
        if self.constraint_residuals.shape != (expected,):
            raise ValueError(
                f"constraint_residuals has {self.constraint_residuals.shape[0]} "
                f"entries, expected {expected}"
            )


def select_batch(num_samples: int, batch_size, rng: np.random.Generator) -> np.ndarray:
    """Indices for one optimization step.

    "full" yields every index in order and leaves the generator untouched;
    an integer draws that many indices uniformly without replacement,
    advancing the generator state.
    """
    if not (isinstance(num_samples, int) and num_samples >= 1):
        raise ValueError(f"num_samples must be a positive integer, got {num_samples}")
    if isinstance(batch_size, str):
        if batch_size != "full":
            raise ValueError(f'batch_size must be "full" or an integer, got {batch_size!r}')
        return np.arange(num_samples, dtype=np.int64)
    if not (isinstance(batch_size, int) and 1 <= batch_size):
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if batch_size > num_samples:
        raise ValueError(
            f"batch_size {batch_size} exceeds the {num_samples} available samples"
        )
    return np.sort(rng.choice(num_samples, size=batch_size, replace=False))


def step(
    theta: ConfidenceTensor,
    batch: Batch,
    loss_params: LossParams,
    learning_rate: float,
) -> ConfidenceTensor:
    """One plain descent step at a fixed scale, no acceptance check."""
    if not (math.isfinite(learning_rate) and learning_rate >= 0):
        raise ValueError(f"learning_rate must be a nonnegative real, got {learning_rate}")
    grad = gradient(theta, batch, loss_params)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("gradient is non-finite")
    return ConfidenceTensor(
        theta.num_classes, theta.num_learners, theta.theta - learning_rate * grad
    )


def train(
    predictions,
    labels,
    weights: ClassifierWeights,
    loss_params: LossParams,
    config: OptimizerConfig,
) -> TrainReport:
    """Fit the confidence tensor to stacked predictions by gradient descent.

    Starts from the diagonal accuracy-weighted tensor, so iteration 0 is
    exactly weighted voting and every later iterate can only lower the
    training loss.  Stops when the relative full-dataset loss change drops
    below the tolerance or the iteration budget runs out.
    """
    full = Batch(predictions, labels)
    if (
        weights.num_learners != full.num_learners
        or weights.num_classes != full.num_classes
    ):
        raise ValueError(
            f"weights describe ({weights.num_classes}, {weights.num_learners}), "
            f"predictions are ({full.num_classes}, {full.num_learners})"
        )
    if isinstance(config.batch_size, int) and config.batch_size > len(full):
        raise ValueError(
            f"batch_size {config.batch_size} exceeds the {len(full)} available samples"
        )

    theta = init_confidence_tensor(weights, full.num_classes)
    target = weights.expanded
    rng = np.random.default_rng(config.seed)

    def residual(t: ConfidenceTensor) -> float:
        return float(np.abs(t.column_sums() - target).max())

    current = loss(theta, full, loss_params)
    if not math.isfinite(current):
        raise DivergenceError(
            f"loss is non-finite at iteration 0 (learning rate {config.learning_rate})"
        )
    losses = [current]
    residuals = [residual(theta)]
    converged = False
    iterations = 0

    for p in range(1, config.max_iters + 1):
        if config.batch_size == "full":
            sub = full
        else:
            sub = full.subset(select_batch(len(full), config.batch_size, rng))
        grad = gradient(theta, sub, loss_params)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(
                f"gradient is non-finite at iteration {p} "
                f"(learning rate {config.learning_rate})"
            )

        beta = config.learning_rate
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            candidate = ConfidenceTensor(
                theta.num_classes, theta.num_learners, theta.theta - beta * grad
            )
            cand_loss = loss(candidate, full, loss_params)
            if math.isfinite(cand_loss) and cand_loss <= current:
                theta = candidate
                new_loss = cand_loss
                accepted = True
                break
            beta *= 0.5
        if not accepted:
            # no tried scale along this direction avoids increasing the
            # loss: keep theta, let the stopping rule see a zero change
            new_loss = current

        iterations = p
        losses.append(new_loss)
        residuals.append(residual(theta))
        relative = abs(new_loss - current) / max(abs(current), 1.0)
        current = new_loss
        if relative < config.tolerance:
            converged = True
            break

    return TrainReport(
        final_theta=theta,
        loss_history=np.asarray(losses),
        constraint_residuals=np.asarray(residuals),
        iterations_run=iterations,
        converged=converged,
    )
