"""Tests for the margin-augmented cross-entropy loss and its analytic
gradient.

The frozen numeric oracles below were computed independently with scalar
math.exp / math.log arithmetic, one term at a time, and are pinned to
full printed precision.
"""

import math

import numpy as np
import pytest

from tensorfuse.lossgrad import (
    Batch,
    LossParams,
    convexity_probe,
    fd_gradient,
    gradient,
    logsumexp,
    loss,
    loss_given_probs,
    margin_given_probs,
    sample_margin,
    softmax,
)
from tensorfuse.tensor import ConfidenceTensor, StackedPrediction


def tiny_instance():
    """c=2, k=2 tensor and a two-sample batch used by the frozen oracles."""
    theta = ConfidenceTensor(2, 2, np.array([[0.8, 0.1, 0.3, 0.5],
                                             [0.2, 0.6, 0.4, 0.2]]))
    batch = Batch(
        [
            StackedPrediction(2, 2, np.array([0, 1])),
            StackedPrediction(2, 2, np.array([1, 1])),
        ],
        np.array([0, 1]),
    )
    return theta, batch


def random_instance(rng):
    """Random tensor, votes, and label with dimensions drawn from small grids.

    Entries scale like 1/sqrt(k) so fused scores stay O(1) for every k,
    which keeps finite differences well conditioned.
    """
    c = int(rng.choice([2, 3, 5]))
    k = int(rng.choice([1, 3, 10]))
    theta = ConfidenceTensor(c, k, rng.normal(0.0, 0.5 / math.sqrt(k), size=(c, k * c)))
    g = StackedPrediction(c, k, rng.integers(0, c, size=k))
    label = int(rng.integers(0, c))
    return theta, Batch([g], np.array([label]))


class TestLossParams:
    def test_defaults(self):
        p = LossParams()
        assert p.alpha == 10.0 and p.gamma == 5.0

    def test_validation(self):
        with pytest.raises(ValueError):
            LossParams(alpha=0.0)
        with pytest.raises(ValueError):
            LossParams(alpha=math.inf)
        with pytest.raises(ValueError):
            LossParams(gamma=-1.0)
        LossParams(gamma=0.0)


class TestBatch:
    def test_caches_vote_matrix(self):
        _, batch = tiny_instance()
        np.testing.assert_array_equal(batch.hot_matrix, [[0, 1], [1, 1]])
        assert len(batch) == 2

    def test_subset_selects_rows(self):
        _, batch = tiny_instance()
        sub = batch.subset([1])
        np.testing.assert_array_equal(sub.hot_matrix, [[1, 1]])
        np.testing.assert_array_equal(sub.labels, [1])

    def test_rejects_label_out_of_range(self):
        g = StackedPrediction(2, 1, np.array([0]))
        with pytest.raises(ValueError):
            Batch([g], np.array([2]))

    def test_rejects_mixed_dimensions(self):
        with pytest.raises(ValueError):
            Batch(
                [StackedPrediction(2, 1, np.array([0])),
                 StackedPrediction(3, 1, np.array([0]))],
                np.array([0, 0]),
            )

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Batch([], np.array([]))


class TestSoftmax:
    def test_known_value(self):
        s = softmax(np.array([1.3, 0.4]))
        np.testing.assert_allclose(
            s, [0.7109495026250039, 0.289050497374996], rtol=1e-15
        )

    def test_shift_invariance_and_overflow_safety(self):
        v = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(softmax(v), softmax(v + 1000.0), rtol=1e-12)
        s = softmax(np.array([1e308, 0.0]))
        assert np.all(np.isfinite(s)) and abs(s.sum() - 1.0) < 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            softmax(np.array([np.inf, 0.0]))


class TestLogsumexp:
    def test_known_values(self):
        v = np.array([0.3, -0.2, 0.5])
        np.testing.assert_allclose(logsumexp(v, 10.0), 0.5127730871634859, rtol=1e-15)
        np.testing.assert_allclose(logsumexp(v, 100.0), 0.5000000000206115, rtol=1e-15)

    def test_bracketed_by_max_and_smoothing_slack(self):
        rng = np.random.default_rng(29)
        for _ in range(300):
            n = int(rng.integers(2, 8))
            v = rng.normal(size=n)
            alpha = float(rng.choice([1.0, 10.0, 100.0]))
            val = logsumexp(v, alpha)
            assert v.max() - 1e-12 <= val <= v.max() + math.log(n) / alpha + 1e-12

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            logsumexp(np.array([0.0, 1.0]), 0.0)
        with pytest.raises(ValueError):
            logsumexp(np.array([np.nan, 1.0]), 10.0)


class TestMargin:
    def test_known_value(self):
        m = margin_given_probs(np.array([0.7, 0.2, 0.1]), 0, 10.0)
        np.testing.assert_allclose(m, 0.4592394035555619, rtol=1e-15)

    def test_sample_margin_composes_fuse_softmax_margin(self):
        theta, batch = tiny_instance()
        g = StackedPrediction(2, 2, np.array([0, 1]))
        m = sample_margin(theta, g, 0, 10.0)
        np.testing.assert_allclose(m, 0.4164929842148114, rtol=1e-14)

    def test_margin_never_exceeds_true_class_probability(self):
        # the zeroed true entry keeps exp(0) = 1 inside the soft max, so
        # the subtracted term is always nonnegative
        rng = np.random.default_rng(31)
        for _ in range(200):
            c = int(rng.integers(2, 6))
            s = rng.dirichlet(np.ones(c))
            label = int(rng.integers(0, c))
            assert margin_given_probs(s, label, 10.0) <= s[label] + 1e-12

    def test_sample_margin_label_range(self):
        theta, _ = tiny_instance()
        g = StackedPrediction(2, 2, np.array([0, 1]))
        with pytest.raises(ValueError):
            sample_margin(theta, g, 2, 10.0)


class TestLossValues:
    def test_single_sample_frozen_oracle(self):
        theta, batch = tiny_instance()
        one = batch.subset([0])
        np.testing.assert_allclose(
            loss(theta, one, LossParams(10.0, 5.0)), -1.741311046341969, rtol=1e-14
        )

    def test_batch_loss_is_the_sum_over_samples(self):
        theta, batch = tiny_instance()
        params = LossParams(10.0, 5.0)
        total = loss(theta, batch, params)
        np.testing.assert_allclose(total, -1.6359973894889426, rtol=1e-14)
        parts = loss(theta, batch.subset([0]), params) + loss(
            theta, batch.subset([1]), params
        )
        np.testing.assert_allclose(total, parts, rtol=1e-13)

    def test_gamma_zero_is_plain_cross_entropy(self):
        theta, batch = tiny_instance()
        one = batch.subset([0])
        np.testing.assert_allclose(
            loss(theta, one, LossParams(10.0, 0.0)), 0.3411538747320879, rtol=1e-14
        )

    def test_loss_given_probs_matches_composed_path(self):
        rng = np.random.default_rng(37)
        params = LossParams(10.0, 5.0)
        for _ in range(100):
            theta, batch = random_instance(rng)
            z = theta.theta @ StackedPrediction(
                batch.num_classes, batch.num_learners, batch.hot_matrix[0]
            ).dense()
            direct = loss_given_probs(softmax(z), int(batch.labels[0]), params)
            np.testing.assert_allclose(
                loss(theta, batch, params), direct, rtol=1e-11, atol=1e-11
            )

    def test_dimension_mismatch_raises(self):
        theta, _ = tiny_instance()
        bad = Batch([StackedPrediction(2, 3, np.array([0, 1, 0]))], np.array([0]))
        with pytest.raises(ValueError):
            loss(theta, bad, LossParams())


class TestGradient:
    def test_frozen_oracle_entries(self):
        # sample votes (0, 1) with label 0 touches columns 0 and 3 only;
        # both receive the same dz vector
        theta, batch = tiny_instance()
        grad = gradient(theta, batch.subset([0]), LossParams(10.0, 5.0))
        dz = np.array([-2.289981367159279, 2.289981367159278])
        np.testing.assert_allclose(grad[:, 0], dz, rtol=1e-13)
        np.testing.assert_allclose(grad[:, 3], dz, rtol=1e-13)
        np.testing.assert_allclose(grad[:, 1], 0.0, atol=1e-15)
        np.testing.assert_allclose(grad[:, 2], 0.0, atol=1e-15)

    def test_batch_gradient_is_sum_of_per_sample_gradients(self):
        theta, batch = tiny_instance()
        params = LossParams(10.0, 5.0)
        total = gradient(theta, batch, params)
        parts = gradient(theta, batch.subset([0]), params) + gradient(
            theta, batch.subset([1]), params
        )
        np.testing.assert_allclose(total, parts, rtol=1e-12, atol=1e-14)

    def test_every_column_sums_to_zero(self):
        rng = np.random.default_rng(41)
        for gamma in (0.0, 5.0, 25.0):
            params = LossParams(10.0, gamma)
            for _ in range(60):
                theta, batch = random_instance(rng)
                grad = gradient(theta, batch, params)
                assert np.abs(grad.sum(axis=0)).max() <= 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(43)
        for gamma in (0.0, 5.0, 25.0):
            params = LossParams(10.0, gamma)
            for _ in range(10):
                theta, batch = random_instance(rng)
                a = gradient(theta, batch, params)
                f = fd_gradient(theta, batch, params, step=1e-5)
                mask = np.abs(a) > 1e-8
                rel = np.abs(a[mask] - f[mask]) / np.abs(a[mask])
                assert rel.max() <= 1e-5

    def test_gradient_steps_preserve_column_sums(self):
        rng = np.random.default_rng(47)
        theta, batch = random_instance(rng)
        before = theta.theta.sum(axis=0)
        stepped = theta.theta - 0.25 * gradient(theta, batch, LossParams(10.0, 5.0))
        np.testing.assert_allclose(stepped.sum(axis=0), before, rtol=0, atol=1e-12)

    def test_fd_step_bounds(self):
        theta, batch = tiny_instance()
        with pytest.raises(ValueError):
            fd_gradient(theta, batch, LossParams(), step=1e-9)
        with pytest.raises(ValueError):
            fd_gradient(theta, batch, LossParams(), step=0.5)


class TestConvexityProbe:
    def test_accepts_random_probability_segments(self):
        rng = np.random.default_rng(53)
        params = LossParams(10.0, 5.0)
        for _ in range(100):
            c = int(rng.integers(2, 6))
            s0 = 0.98 * rng.dirichlet(np.ones(c)) + 0.02 / c
            s1 = 0.98 * rng.dirichlet(np.ones(c)) + 0.02 / c
            label = int(rng.integers(0, c))
            assert convexity_probe(s0, s1, label, params)

    def test_rejects_non_probability_inputs(self):
        with pytest.raises(ValueError):
            convexity_probe([0.5, 0.6], [0.5, 0.5], 0, LossParams())
        with pytest.raises(ValueError):
            convexity_probe([0.5, 0.5], [0.7, 0.3], 2, LossParams())
        with pytest.raises(ValueError):
            convexity_probe([0.5, 0.5], [0.7, 0.3], 0, LossParams(), num_points=2)

    def test_segment_endpoints_participate(self):
        # a degenerate segment evaluates one point repeatedly and must pass
        s = np.array([0.6, 0.3, 0.1])
        assert convexity_probe(s, s, 1, LossParams(10.0, 5.0))
