"""Cross-validation harness, metrics, and eigen/relevance profiles."""

import json

import numpy as np
import pytest
from conftest import random_model, two_gaussian_dataset

from lvqkit import data
from lvqkit.errors import ClassTooSmall
from lvqkit.evaluation import (
    CVReport,
    ExperimentSpec,
    compute_metrics,
    eigen_relevance,
    feature_relevances,
    run_experiment,
    stratified_kfold,
)
from lvqkit.model import TrainingConfig


def small_imbalanced(counts=(24, 10), d=3, seed=0):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for c, n in enumerate(counts):
        center = np.full(d, 2.0)
        center[c % d] += 5.0
        rows.append(rng.normal(size=(n, d)) + center)
        labels.extend([c] * n)
    return data.make_dataset(np.vstack(rows), np.array(labels))


class TestStratifiedKFold:
    def test_even_classes_split_exactly(self):
        ds = small_imbalanced(counts=(10, 10))
        split = stratified_kfold(ds, 5, seed=1)
        for fold in range(5):
            labels = ds.labels[split.test_indices(fold)]
            assert (labels == 0).sum() == 2 and (labels == 1).sum() == 2

    def test_deterministic(self):
        ds = small_imbalanced()
        a = stratified_kfold(ds, 4, seed=3)
        b = stratified_kfold(ds, 4, seed=3)
        np.testing.assert_array_equal(a.assignments, b.assignments)

    def test_smallest_class_spread(self):
        ds = small_imbalanced(counts=(40, 13))
        split = stratified_kfold(ds, 5, seed=4)
        per_fold = sorted(
            (ds.labels[split.test_indices(f)] == 1).sum() for f in range(5)
        )
        assert per_fold == [2, 2, 3, 3, 3]

    def test_class_too_small(self):
        ds = small_imbalanced(counts=(30, 4))
        with pytest.raises(ClassTooSmall, match="'1'"):
            stratified_kfold(ds, 5, seed=0)


class TestComputeMetrics:
    def test_perfect_predictions(self):
        labels = np.array([0, 1, 2, 1, 0])
        m = compute_metrics(labels, labels, 3)
        assert m.error == 0.0
        assert m.sensitivity == 1.0 and m.specificity == 1.0
        np.testing.assert_array_equal(m.classwise_accuracy, 1.0)

    def test_all_predicted_healthy_binary(self):
        labels = np.array([0] * 6 + [1] * 4)
        preds = np.zeros(10, dtype=int)
        m = compute_metrics(preds, labels, 2)
        assert m.sensitivity == 0.0
        assert m.specificity == 1.0
        assert abs(m.error - 0.4) < 1e-12

    def test_hand_built_three_class_confusion(self):
        labels = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2])
        preds = np.array([0, 0, 1, 1, 2, 2, 2, 0, 2])
        m = compute_metrics(preds, labels, 3)
        np.testing.assert_array_equal(
            m.confusion, [[2, 1, 0], [0, 1, 1], [1, 0, 3]]
        )
        np.testing.assert_allclose(m.classwise_accuracy, [2 / 3, 1 / 2, 3 / 4])
        # pooled disease recall over classes 1 and 2: (1 + 3) / 6
        np.testing.assert_allclose(m.sensitivity, 4 / 6)
        np.testing.assert_allclose(m.specificity, 2 / 3)

    def test_empty_class_is_nan_not_zero(self):
        labels = np.array([0, 0, 1])
        preds = np.array([0, 0, 1])
        m = compute_metrics(preds, labels, 3)
        assert np.isnan(m.classwise_accuracy[2])


class TestEigenRelevance:
    def test_rank_limited_omega(self):
        rng = np.random.default_rng(5)
        m = random_model(rng, "ag", d=6, m=3)
        profile = eigen_relevance(m)["global"]
        assert (profile.eigenvalues[3:] < 1e-12).all()
        assert abs(profile.eigenvalues.sum() - 1.0) < 1e-6
        assert profile.eigenvalues[0] >= profile.eigenvalues[-1]

    def test_effective_rank_threshold(self):
        omega = np.diag([1.0, 0.5, 0.001])
        m = random_model(np.random.default_rng(6), "ag", d=3, m=3)
        m.omega = omega
        profile = eigen_relevance(m)["global"]
        assert profile.effective_rank == 2

    def test_local_blocks_per_class(self):
        rng = np.random.default_rng(7)
        m = random_model(rng, "al", n_classes=3)
        m.class_names = ("a", "b", "c")
        profiles = eigen_relevance(m)
        assert set(profiles) == {"class:a", "class:b", "class:c"}

    def test_twomatrix_blocks(self):
        rng = np.random.default_rng(8)
        m = random_model(rng, "a2m", n_classes=2)
        m.class_names = ("x", "y")
        profiles = eigen_relevance(m)
        assert set(profiles) == {"global", "class:x", "class:y"}


class TestFeatureRelevances:
    def test_uniform_for_scaled_identity(self):
        m = random_model(np.random.default_rng(9), "ag", d=4, m=4)
        m.omega = np.eye(4) / 2.0
        rel = feature_relevances(m)["global"]
        np.testing.assert_allclose(rel, 0.25)

    def test_sums_to_one(self):
        rng = np.random.default_rng(10)
        for variant in ("ag", "el", "a2m"):
            m = random_model(rng, variant)
            for rel in feature_relevances(m).values():
                assert abs(rel.sum() - 1.0) < 1e-9
                assert (rel >= 0).all()

    def test_permutation_covariance(self):
        rng = np.random.default_rng(11)
        m = random_model(rng, "ag", d=5, m=3)
        perm = np.array([3, 0, 4, 1, 2])
        rel = feature_relevances(m)["global"]
        m_perm = random_model(rng, "ag", d=5, m=3)
        m_perm.omega = m.omega[:, perm]
        rel_perm = feature_relevances(m_perm)["global"]
        np.testing.assert_allclose(rel_perm, rel[perm], rtol=1e-12)


class TestRunExperiment:
    def _spec(self, ds, **kw):
        defaults = dict(
            dataset=ds,
            variant="ag",
            configs=(TrainingConfig(epochs=8, beta=2.0),),
            folds=3,
            runs=2,
            zscore=True,
            seed=5,
        )
        defaults.update(kw)
        return ExperimentSpec(**defaults)

    def test_report_shape_and_determinism(self):
        ds = small_imbalanced(counts=(18, 12))
        report1 = run_experiment(self._spec(ds))
        report2 = run_experiment(self._spec(ds))
        assert len(report1.cells) == 3 * 2
        assert report1.to_document() == report2.to_document()

    def test_aggregates_recompute_exactly(self):
        ds = small_imbalanced(counts=(18, 12))
        report = run_experiment(self._spec(ds))
        s = report.summaries[0]
        test_errors = np.array([c.test_metrics.error for c in report.cells])
        assert s.mean["test_error"] == pytest.approx(test_errors.mean(), abs=1e-15)
        assert s.std["test_error"] == pytest.approx(test_errors.std(ddof=1), abs=1e-15)

    def test_no_leakage_dataset_untouched(self):
        ds = small_imbalanced(counts=(18, 12))
        before = ds.samples.copy()
        run_experiment(self._spec(ds, oversample="smoteg", smote_k=2))
        np.testing.assert_array_equal(ds.samples, before)
        assert not ds.samples.flags.writeable

    def test_oversampling_train_only_changes_nothing_for_test_metrics_size(self):
        ds = small_imbalanced(counts=(20, 8))
        report = run_experiment(self._spec(ds, oversample="smote", smote_k=2))
        # test metrics computed on the raw fold sizes (sum of confusion = fold size)
        per_run_total = 0
        for cell in report.cells:
            fold_size = cell.test_metrics.confusion.sum()
            assert 8 <= fold_size <= 10  # never oversampled
            per_run_total += fold_size
            # train split was padded to balance: both classes equal
            train_conf = cell.train_metrics.confusion
            assert train_conf.sum(axis=1)[0] == train_conf.sum(axis=1)[1]
        assert per_run_total == 2 * ds.n_samples  # two runs cover the data once each

    def test_best_config_selected_by_train_error(self):
        # class 1 is a two-lobe mixture whose mean coincides with class 0,
        # so the untrained (frozen) config stays near chance while the
        # trained one separates the lobes with its second prototype
        rng = np.random.default_rng(21)
        samples = np.vstack(
            [
                rng.normal(size=(20, 2)) * 0.5 + [5.0, 5.0],
                rng.normal(size=(10, 2)) * 0.5 + [9.0, 1.0],
                rng.normal(size=(10, 2)) * 0.5 + [1.0, 9.0],
            ]
        )
        ds = data.make_dataset(samples, np.array([0] * 20 + [1] * 20))
        good = TrainingConfig(epochs=25, beta=2.0, prototypes_per_class=2)
        frozen = TrainingConfig(
            epochs=1, lr_prototype=0.0, lr_matrix=0.0, beta=2.0, prototypes_per_class=2
        )
        report = run_experiment(self._spec(ds, configs=(frozen, good)))
        assert report.best_config_index == 1
        s_frozen, s_good = report.summaries
        assert s_good.mean["train_error"] < s_frozen.mean["train_error"]

    def test_degenerate_folds_fail_before_training(self):
        ds = small_imbalanced(counts=(30, 4))
        with pytest.raises(ClassTooSmall):
            run_experiment(self._spec(ds, folds=5))

    def test_csv_and_json_outputs(self):
        ds = small_imbalanced(counts=(18, 12))
        report = run_experiment(self._spec(ds))
        doc = report.to_document()
        json.dumps(doc)  # serializable
        csv_text = report.cells_csv(class_names=["neg", "pos"])
        lines = csv_text.strip().splitlines()
        assert len(lines) == 1 + len(report.cells)
        assert lines[0].startswith("config_index,beta,rank")

    def test_positive_classes_default_excludes_zero(self):
        ds = small_imbalanced(counts=(15, 9, 9))
        spec = self._spec(
            ds, variant="el", configs=(TrainingConfig(epochs=6),), folds=3, runs=1
        )
        report = run_experiment(spec)
        cell = report.cells[0]
        conf = cell.test_metrics.confusion
        counts = conf.sum(axis=1)
        expected = (conf[1, 1] + conf[2, 2]) / (counts[1] + counts[2])
        assert cell.test_metrics.sensitivity == pytest.approx(expected)

    def test_median_effective_rank_reported(self):
        ds = two_gaussian_dataset(n=40, d=4, seed=12)
        spec = self._spec(ds, variant="ag", configs=(TrainingConfig(epochs=6, beta=5.0),))
        report = run_experiment(spec)
        assert "global" in report.summaries[0].median_effective_rank
