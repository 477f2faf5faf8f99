import json

import numpy as np
import pytest

from classifier_lib import TreeParams, train
from errors import DomainError, EvaluationError, TrainingError
from eval_lib import (
    ConfusionMatrix,
    ablation,
    cross_validate,
    evaluate_model,
    kfold_split,
    macro_mean,
    metrics,
    render_ablation,
    render_report,
)
from trace_model import MODE_ORDER, Mode

# Counts whose per-class precision is 99.23 / 92.74 / 75.82 %
BOTH_SCALES_PRECISION = ((9923, 0, 0), (77, 9274, 2418), (0, 726, 7582))
# Counts whose per-class recall is 100.00 / 87.76 / 81.76 %
BOTH_SCALES_RECALL = ((10000, 0, 0), (0, 8776, 1224), (0, 1824, 8176))
# Log scale only: precision 95.08 / 89.64 / 70.67 %, recall 100.00 / 79.11 / 75.89 %
LOG_ONLY_PRECISION = ((9508, 0, 0), (492, 8964, 2933), (0, 1036, 7067))
LOG_ONLY_RECALL = ((10000, 0, 0), (0, 7911, 2089), (0, 2411, 7589))


def separable_dataset(make_instance, per_class=30):
    return [
        make_instance({0: mode.index * 10 + (i % 7) * 0.1, 1: i}, mode)
        for mode in MODE_ORDER
        for i in range(per_class)
    ]


class TestKFold:
    def test_exact_division(self, make_instance):
        folds = kfold_split([make_instance({0: i}) for i in range(100)], 5, seed=3)
        assert [len(f) for f in folds] == [20] * 5

    def test_sizes_differ_by_at_most_one(self, make_instance):
        folds = kfold_split([make_instance({0: i}) for i in range(103)], 5, seed=3)
        assert sorted(len(f) for f in folds) == [20, 20, 21, 21, 21]

    @pytest.mark.parametrize("stratified", [False, True])
    def test_partition(self, make_instance, stratified):
        instances = [make_instance({0: i}, MODE_ORDER[i % 3]) for i in range(47)]
        folds = kfold_split(instances, 4, seed=11, stratified=stratified)
        starts = [inst.features[0] for fold in folds for inst in fold]
        assert sorted(starts) == [float(i) for i in range(47)]
        assert max(len(f) for f in folds) - min(len(f) for f in folds) <= 1

    def test_deterministic(self, make_instance):
        instances = [make_instance({0: i}) for i in range(40)]
        assert kfold_split(instances, 5, seed=9) == kfold_split(instances, 5, seed=9)
        assert kfold_split(instances, 5, seed=9) != kfold_split(instances, 5, seed=10)

    def test_stratified_balances_classes(self, make_instance):
        instances = [make_instance({0: i}, MODE_ORDER[i // 20]) for i in range(60)]
        for fold in kfold_split(instances, 5, seed=1, stratified=True):
            assert sorted(inst.label.index for inst in fold) == [0] * 4 + [1] * 4 + [2] * 4

    @pytest.mark.parametrize("n, k", [(10, 1), (3, 5)])
    def test_invalid(self, make_instance, n, k):
        with pytest.raises(EvaluationError):
            kfold_split([make_instance({})] * n, k, seed=0)


class TestCrossValidate:
    def test_separable_is_diagonal(self, make_instance):
        matrix = cross_validate(separable_dataset(make_instance), k=5, seed=4)
        assert matrix.counts == ((30, 0, 0), (0, 30, 0), (0, 0, 30))

    def test_identical_vectors_with_mixed_labels(self, make_instance):
        instances = [make_instance({0: 1.0}, Mode.WALKING)] * 50 + [make_instance({0: 1.0}, Mode.DRIVING)] * 50
        matrix = cross_validate(instances, k=5, seed=0)
        counts = matrix.array
        assert matrix.total == 100
        assert counts[1, 2] + counts[2, 1] + counts[2, 2] + counts[1, 1] == 100
        assert counts[1, 2] + counts[2, 1] > 0
        # Each fold predicts its training majority, which is the held-out minority
        assert metrics(matrix).accuracy <= 50.0

    def test_jobs_do_not_change_the_result(self, rng, make_instance):
        instances = [
            make_instance({0: rng.normal() + mode.index, 1: rng.normal()}, mode)
            for mode in MODE_ORDER for _ in range(40)
        ]
        assert cross_validate(instances, 5, seed=2, jobs=3) == cross_validate(instances, 5, seed=2)

    def test_training_error_propagates(self, make_instance):
        with pytest.raises(TrainingError):
            cross_validate(separable_dataset(make_instance, per_class=4), k=5)

    def test_unlabeled(self, make_instance):
        with pytest.raises(EvaluationError):
            cross_validate([make_instance({})] * 30, k=5)

    def test_ablation_runs_every_scale_set(self, make_instance):
        instances = separable_dataset(make_instance)
        reports = ablation(instances, k=3, tree_params=TreeParams(min_leaf=2))
        assert list(reports) == ["log", "linear", "both"]
        assert all(r.matrix.total == len(instances) for r in reports.values())
        # Columns 0 and 1 are log-scale, 10 s window columns
        assert reports["both"].macro_recall == 100.0
        assert reports["log"].macro_recall == 100.0
        assert reports["linear"].matrix.array.diagonal().sum() < len(instances)

    def test_evaluate_model(self, make_instance):
        instances = separable_dataset(make_instance)
        tree = train(instances)
        assert evaluate_model(tree, instances).total == 90
        with pytest.raises(EvaluationError):
            evaluate_model(tree, [make_instance({})])


class TestMetrics:
    @pytest.mark.parametrize("counts, attribute, per_class, macro", [
        (BOTH_SCALES_PRECISION, "precision", (99.23, 92.74, 75.82), 89.26),
        (BOTH_SCALES_RECALL, "recall", (100.0, 87.76, 81.76), 89.84),
        (LOG_ONLY_PRECISION, "precision", (95.08, 89.64, 70.67), 85.13),
        (LOG_ONLY_RECALL, "recall", (100.0, 79.11, 75.89), 85.00),
    ])
    def test_published_macro_averages(self, counts, attribute, per_class, macro):
        report = metrics(ConfusionMatrix(counts))
        values = getattr(report, attribute)
        assert [values[m] for m in MODE_ORDER] == pytest.approx(per_class, abs=1e-9)
        assert getattr(report, f"macro_{attribute}") == pytest.approx(macro, abs=0.01)

    def test_identity(self):
        report = metrics(ConfusionMatrix(np.eye(3, dtype=int) * 17))
        assert all(v == 100.0 for v in report.precision.values())
        assert all(v == 100.0 for v in report.recall.values())
        assert report.macro_precision == report.macro_recall == report.accuracy == 100.0

    def test_undefined_classes_are_excluded(self):
        report = metrics(ConfusionMatrix(((8, 2, 0), (2, 8, 0), (0, 0, 0))))
        assert report.precision[Mode.DRIVING] is None
        assert report.recall[Mode.DRIVING] is None
        assert report.macro_precision == pytest.approx(80.0)
        assert report.row_normalized[2] == (None, None, None)

    def test_empty_matrix(self):
        with pytest.raises(EvaluationError):
            metrics(ConfusionMatrix.zeros())

    def test_negative_counts(self):
        with pytest.raises(DomainError):
            ConfusionMatrix(((1, -1, 0), (0, 0, 0), (0, 0, 0)))

    def test_properties_on_random_matrices(self, rng):
        for _ in range(200):
            matrix = ConfusionMatrix(rng.integers(0, 50, size=(3, 3)))
            if matrix.total == 0:
                continue
            report = metrics(matrix)
            for row in report.row_normalized:
                if row[0] is not None:
                    assert sum(row) == pytest.approx(100.0, abs=0.01)
            for c in range(3):
                column = [report.column_normalized[r][c] for r in range(3)]
                if column[0] is not None:
                    assert sum(column) == pytest.approx(100.0, abs=0.01)

            recalls = [v for v in report.recall.values() if v is not None]
            assert min(recalls) - 1e-9 <= report.accuracy <= max(recalls) + 1e-9

            factor = int(rng.integers(2, 9))
            scaled = metrics(matrix.scaled(factor))
            assert scaled.precision == pytest.approx(report.precision)
            assert scaled.recall == pytest.approx(report.recall)
            assert scaled.macro_precision == pytest.approx(report.macro_precision)
            assert scaled.macro_recall == pytest.approx(report.macro_recall)

    def test_macro_mean(self):
        assert macro_mean([None, None]) is None
        assert macro_mean([50.0, None, 100.0]) == 75.0


class TestRender:
    def test_diagonal_text(self):
        text = render_report(metrics(ConfusionMatrix(np.eye(3, dtype=int) * 5))).decode("utf-8")
        assert text.count("100.00%") >= 6
        assert "Stationary" in text and "Driving" in text

    def test_published_precision_in_text(self):
        text = render_report(metrics(ConfusionMatrix(BOTH_SCALES_PRECISION)), "text").decode("utf-8")
        assert "89.26" in text
        assert "99.23%" in text

    def test_json_reproduces_counts(self):
        matrix = ConfusionMatrix(BOTH_SCALES_RECALL)
        payload = json.loads(render_report(metrics(matrix), "json"))
        assert payload["counts"] == [list(row) for row in BOTH_SCALES_RECALL]
        assert payload["recall"]["walking"] == pytest.approx(87.76)
        assert payload["macro_recall"] == pytest.approx(89.84, abs=0.01)
        assert set(payload) >= {"counts", "precision", "recall", "macro_precision", "macro_recall"}

    def test_undefined_values(self):
        report = metrics(ConfusionMatrix(((3, 0, 0), (0, 0, 0), (0, 0, 0))))
        assert "n/a" in render_report(report).decode("utf-8")
        assert json.loads(render_report(report, "json"))["precision"]["walking"] is None

    def test_unknown_format(self):
        with pytest.raises(DomainError):
            render_report(metrics(ConfusionMatrix(np.eye(3, dtype=int))), "xml")

    def test_ablation_json(self, make_instance):
        reports = ablation(separable_dataset(make_instance), k=3, tree_params=TreeParams(min_leaf=2))
        payload = json.loads(render_ablation(reports, "json"))
        assert list(payload) == ["log", "linear", "both"]
