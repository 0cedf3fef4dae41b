import math

import numpy as np
import pytest
from oracles import head_grid_search_2x2, random_prediction_matrix

from haste import bounds as bd
from haste import metrics as mx
from haste.hardness import HardnessVector, select_hard_subset
from haste.tensor_store import LabelVector, PredictionMatrix, SubsetIndex

TWO_SAMPLE_LEEP = -0.4679854666153014
TWO_SAMPLE_LOWER_BOUND = -0.5747933353250833
TWO_SAMPLE_HARD_COUNT_BOUND = -0.2899092486908399  # hard NCE is 0 here


def random_instance(rng, n=None, num_y=None, num_z=None):
    n = n or int(rng.integers(5, 150))
    num_y = num_y or int(rng.integers(2, 8))
    num_z = num_z or int(rng.integers(2, 8))
    rows = random_prediction_matrix(rng, n, num_z)
    y = np.concatenate([np.arange(num_y), rng.integers(0, num_y, size=n - num_y)]) \
        if n >= num_y else rng.integers(0, num_y, size=n)
    return PredictionMatrix(rows=rows), LabelVector(labels=y, num_classes=num_y)


class TestFitOptimalHead:
    def test_one_hot_already_optimal(self):
        rows = np.eye(3, dtype=np.float32)
        preds = PredictionMatrix(rows=rows)
        labels = LabelVector(labels=np.arange(3), num_classes=3)
        fit = bd.fit_optimal_head(preds, labels)
        assert fit.log_likelihood == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(fit.q, np.eye(3), atol=1e-12)
        assert fit.converged
        assert fit.iterations == 1

    def test_infinite_tol_returns_initialization(self, two_sample_instance):
        preds, labels = two_sample_instance
        fit = bd.fit_optimal_head(preds, labels, tol=math.inf, max_iter=0)
        assert fit.iterations == 0
        assert fit.log_likelihood == pytest.approx(TWO_SAMPLE_LEEP, abs=1e-12)

    def test_initialization_equals_leep_exactly(self, rng):
        for _ in range(15):
            preds, labels = random_instance(rng)
            fit = bd.fit_optimal_head(preds, labels, tol=math.inf, max_iter=0)
            leep_value = mx.leep(preds, labels).value
            assert fit.history[0] == leep_value

    def test_improves_on_leep(self, two_sample_instance):
        preds, labels = two_sample_instance
        fit = bd.fit_optimal_head(preds, labels, tol=1e-12, max_iter=2000)
        assert fit.log_likelihood >= TWO_SAMPLE_LEEP

    def test_reaches_grid_search_optimum(self, two_sample_instance):
        # Exhaustive 2x2 stochastic-head search, 2001 grid points per axis.
        preds, labels = two_sample_instance
        fit = bd.fit_optimal_head(preds, labels, tol=1e-14, max_iter=5000)
        best = head_grid_search_2x2(preds.rows, labels.labels.tolist())
        assert fit.log_likelihood >= best - 1e-6
        assert fit.log_likelihood <= best + 1e-6

    def test_monotone_history(self, rng):
        for _ in range(15):
            preds, labels = random_instance(rng)
            fit = bd.fit_optimal_head(preds, labels)
            diffs = np.diff(fit.history)
            assert np.all(diffs >= -1e-12)

    def test_columns_stay_stochastic(self, rng):
        preds, labels = random_instance(rng, n=60, num_y=4, num_z=5)
        fit = bd.fit_optimal_head(preds, labels)
        np.testing.assert_allclose(fit.q.sum(axis=0), 1.0, atol=1e-9)
        assert fit.q.min() >= 0.0

    def test_invalid_tol(self, two_sample_instance):
        preds, labels = two_sample_instance
        with pytest.raises(ValueError, match="tol"):
            bd.fit_optimal_head(preds, labels, tol=0.0)


class TestUpperBoundReport:
    def test_subset_score_below_subset_refit(self, rng):
        for _ in range(10):
            preds, labels = random_instance(rng, n=80)
            h = HardnessVector(scores=rng.uniform(0, 2, size=80), method="ca")
            subset = select_hard_subset(h, 0.4)
            report = bd.upper_bound_report(preds, labels, subset)
            assert report.slacks["upper_hard_minus_score"] >= -1e-9

    def test_full_set_collapse(self, two_sample_instance):
        preds, labels = two_sample_instance
        report = bd.upper_bound_report(preds, labels, None)
        assert report.haste_leep == pytest.approx(TWO_SAMPLE_LEEP, abs=1e-12)
        assert report.upper_bound_hard == report.upper_bound_full
        assert report.haste_leep <= report.upper_bound_full + 1e-9

    def test_one_hot_all_three_zero(self):
        rows = np.eye(4, dtype=np.float32)
        preds = PredictionMatrix(rows=rows)
        labels = LabelVector(labels=np.arange(4), num_classes=4)
        subset = SubsetIndex(indices=np.arange(2), source_n=4)
        report = bd.upper_bound_report(preds, labels, subset)
        assert report.haste_leep == pytest.approx(0.0, abs=1e-12)
        assert report.upper_bound_hard == pytest.approx(0.0, abs=1e-12)
        assert report.upper_bound_full == pytest.approx(0.0, abs=1e-12)

    def test_hard_refit_can_be_below_full_refit(self, rng):
        # Label noise confined to the "hard" rows drags their refit down.
        n, c = 120, 3
        rows = np.zeros((n, c), dtype=np.float32)
        y = np.arange(n) % c
        rows[np.arange(n), y] = 1.0
        noisy = np.arange(40)
        y_noisy = y.copy()
        y_noisy[noisy] = (y[noisy] + rng.integers(1, c, size=40)) % c
        # Blur the noisy rows so no mixture probability is exactly zero.
        rows[noisy] = 0.2 + 0.4 * rows[noisy]
        rows /= rows.sum(axis=1, keepdims=True)
        preds = PredictionMatrix(rows=rows)
        labels = LabelVector(labels=y_noisy, num_classes=c)
        subset = SubsetIndex(indices=noisy, source_n=n)
        report = bd.upper_bound_report(preds, labels, subset)
        assert report.upper_bound_hard < report.upper_bound_full


class TestLowerBoundReport:
    def test_one_hot_equality_case(self):
        rows = np.eye(3, dtype=np.float32)
        preds = PredictionMatrix(rows=rows)
        labels = LabelVector(labels=np.arange(3), num_classes=3)
        report = bd.lower_bound_report(preds, labels)
        assert report.lower_bound == pytest.approx(0.0, abs=1e-12)
        assert report.haste_leep == pytest.approx(0.0, abs=1e-12)

    def test_two_sample_frozen_values(self, two_sample_instance):
        preds, labels = two_sample_instance
        report = bd.lower_bound_report(preds, labels)
        assert report.lower_bound == pytest.approx(TWO_SAMPLE_LOWER_BOUND, abs=1e-9)
        assert report.haste_leep >= report.lower_bound

    def test_uniform_predictions_bound(self, rng):
        n = 20
        preds = PredictionMatrix(rows=np.full((n, 2), 0.5, dtype=np.float32))
        labels = LabelVector(labels=rng.integers(0, 2, size=n), num_classes=2)
        report = bd.lower_bound_report(preds, labels)
        soft_nce = report.slacks["soft_nce"]
        assert report.slacks["mean_log_softmax_at_dummy"] == pytest.approx(
            math.log(0.5), abs=1e-7
        )
        assert report.lower_bound == pytest.approx(
            soft_nce + math.log(0.5), abs=1e-7
        )
        assert report.haste_leep >= report.lower_bound - 1e-9

    def test_hard_count_counterexample(self, two_sample_instance):
        # The count-based conditional makes the naive bound exceed the score:
        # the bound only holds with the soft conditional.
        preds, labels = two_sample_instance
        hard_nce = mx.nce(preds, labels, conditional_mode="hard").value
        rows = preds.rows.astype(np.float64)
        z = np.argmax(rows, axis=1)
        mean_log_softmax = float(
            np.mean(np.log(rows[np.arange(2), z]))
        )
        naive_bound = hard_nce + mean_log_softmax
        assert naive_bound == pytest.approx(TWO_SAMPLE_HARD_COUNT_BOUND, abs=1e-9)
        score = mx.leep(preds, labels).value
        assert naive_bound > score  # the naive reading is violated
        report = bd.lower_bound_report(preds, labels)
        assert report.lower_bound <= score  # the soft reading holds

    def test_soft_conditional_strictly_positive_on_valid_rows(self, rng):
        # A sample contributes its own argmax mass to its own joint cell, so
        # the conditional at the dummy label cannot be zero for stochastic
        # rows and the bound stays finite.
        for _ in range(20):
            preds, labels = random_instance(rng)
            report = bd.lower_bound_report(preds, labels)
            assert math.isfinite(report.lower_bound)

    def test_degenerate_rows_hit_the_guard(self):
        # All-zero rows are invalid predictions; the soft-mode conditional
        # guard is what reports them instead of silently producing -inf.
        rows = np.zeros((2, 2), dtype=np.float32)
        preds = PredictionMatrix(rows=rows)
        labels = LabelVector(labels=np.array([0, 1]), num_classes=2)
        with pytest.raises(ValueError, match="zero conditional probability"):
            mx.nce(preds, labels, conditional_mode="soft")
        with pytest.raises(ValueError, match="zero mixture probability"):
            mx.leep(preds, labels)


class TestRandomizedNoViolations:
    def test_twenty_seeded_configurations(self):
        # Sweep of random instances: both bound directions hold everywhere.
        for seed in range(20):
            rng = np.random.default_rng(seed)
            preds, labels = random_instance(rng)
            h = HardnessVector(
                scores=rng.uniform(0, 2, size=preds.n), method="ca"
            )
            subset = select_hard_subset(h, float(rng.uniform(0.2, 0.8)))
            report = bd.bound_report(preds, labels, subset)
            assert report.slacks["upper_hard_minus_score"] >= -1e-9
            assert report.slacks["score_minus_lower"] >= -1e-9
