"""Figure rendering for the report path.

Uses the Agg backend unconditionally: figures go to files next to the
delimited outputs, never to a display.  Figure writes are atomic like
every other artifact write.
"""

from __future__ import annotations

import math
import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiment import REFERENCE_ITERATIONS, ComparisonReport
from .optimizer import TrainReport
from .tensor import ConfidenceTensor

_RESIDUAL_FLOOR = 1e-18


def _atomic_savefig(fig, path, dpi: int = 120) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fig-")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", dpi=dpi)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def convergence_figure(trained: TrainReport, path) -> None:
    """Loss and constraint residual per iteration, with the nominal
    quick-convergence budget marked for reference."""
    iters = np.arange(trained.loss_history.size)
    fig, (ax_loss, ax_res) = plt.subplots(
        2, 1, figsize=(7, 6), sharex=True, constrained_layout=True
    )

    ax_loss.plot(iters, trained.loss_history, marker="o", markersize=3, color="tab:blue")
    ax_loss.axvline(
        REFERENCE_ITERATIONS,
        color="tab:gray",
        linestyle="--",
        linewidth=1,
        label=f"reference budget ({REFERENCE_ITERATIONS} iterations)",
    )
    ax_loss.set_ylabel("training loss")
    ax_loss.set_title(
        f"training trace ({trained.iterations_run} iterations, "
        f"{'converged' if trained.converged else 'budget exhausted'})"
    )
    ax_loss.legend(loc="upper right", fontsize=8)
    ax_loss.grid(alpha=0.3)

    ax_res.semilogy(
        iters,
        np.maximum(trained.constraint_residuals, _RESIDUAL_FLOOR),
        marker="o",
        markersize=3,
        color="tab:red",
    )
    ax_res.axhline(1e-6, color="tab:gray", linestyle=":", linewidth=1, label="bound 1e-6")
    ax_res.set_xlabel("iteration")
    ax_res.set_ylabel("column-sum residual")
    ax_res.legend(loc="upper right", fontsize=8)
    ax_res.grid(alpha=0.3)

    _atomic_savefig(fig, path)


def comparison_figure(report: ComparisonReport, path) -> None:
    """Grouped train/test accuracy bars, one group per method."""
    methods = [s.method for s in report.scores]
    train_acc = [s.train_accuracy for s in report.scores]
    test_acc = [s.test_accuracy for s in report.scores]
    x = np.arange(len(methods))
    width = 0.38

    fig, ax = plt.subplots(
        figsize=(max(6.0, 1.1 * len(methods) + 2.0), 4.5), constrained_layout=True
    )
    ax.bar(x - width / 2, train_acc, width, label="train", color="tab:blue")
    ax.bar(x + width / 2, test_acc, width, label="test", color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(
        f"method comparison (train={report.num_train}, test={report.num_test})"
    )
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(axis="y", alpha=0.3)

    _atomic_savefig(fig, path)


def slices_figure(theta: ConfidenceTensor, path) -> None:
    """One heatmap per learner slice on a shared color scale.

    Rows are evidence-receiving classes, columns the class the learner
    voted; a constant column shows as a flat stripe, the visual signature
    of a vote that cannot move the decision.
    """
    k, c = theta.num_learners, theta.num_classes
    cols = min(k, 5)
    rows = math.ceil(k / cols)
    vmin = float(theta.theta.min())
    vmax = float(theta.theta.max())
    if vmax <= vmin:
        vmax = vmin + 1.0

    fig, axes = plt.subplots(
        rows,
        cols,
        figsize=(2.2 * cols + 1.2, 2.2 * rows + 0.6),
        constrained_layout=True,
        squeeze=False,
    )
    image = None
    for t in range(rows * cols):
        ax = axes[t // cols][t % cols]
        if t >= k:
            ax.set_axis_off()
            continue
        image = ax.imshow(theta.slice_view(t), vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_title(f"learner {t}", fontsize=9)
        ax.set_xticks(range(c))
        ax.set_yticks(range(c))
        ax.tick_params(labelsize=7)
        if t % cols == 0:
            ax.set_ylabel("evidence row", fontsize=8)
        if t // cols == rows - 1:
            ax.set_xlabel("voted class", fontsize=8)
    fig.colorbar(image, ax=axes, shrink=0.8, label="confidence")

    _atomic_savefig(fig, path)
