import numpy as np
import pytest

from trajmode.embedding import CombineRule
from trajmode.evaluation import (
    AlignmentError,
    confusion_matrix,
    evaluate,
    format_table,
    report_from_confusion,
    run_ablation,
)
from trajmode.mlp import TrainConfig, train
from trajmode.trajectory import MODES, Mode

from test_mlp import make_dataset


def padded(confusion_3x3):
    cm = np.zeros((5, 5), dtype=np.int64)
    cm[:3, :3] = confusion_3x3
    return cm


class TestReportFromConfusion:
    def test_perfect_predictions(self):
        cm = np.diag([10, 10, 10, 10, 10])
        report = report_from_confusion(cm)
        assert report.accuracy == 1.0
        assert report.macro_f1 == 1.0
        assert report.absent_classes == ()

    def test_three_class_toy(self):
        # Hand-derived: row sums (2, 2, 2); correct = 5 of 6.
        cm = padded([[2, 0, 0], [1, 1, 0], [0, 0, 2]])
        report = report_from_confusion(cm)
        assert report.accuracy == pytest.approx(5.0 / 6.0)
        walk, bike, bus = (report.per_class[m.value] for m in MODES[:3])
        assert walk.precision == pytest.approx(2.0 / 3.0)
        assert walk.recall == pytest.approx(1.0)
        assert bike.precision == pytest.approx(1.0)
        assert bike.recall == pytest.approx(0.5)
        assert bus.precision == pytest.approx(1.0)
        assert bus.recall == pytest.approx(1.0)
        # The two zero-support classes are excluded from macro and flagged.
        assert set(report.absent_classes) == {"car", "subway"}
        assert report.macro_precision == pytest.approx((2 / 3 + 1 + 1) / 3)

    def test_all_one_class_predictions(self):
        # Balanced 5x20 test set, everything predicted as class 0.
        cm = np.zeros((5, 5), dtype=np.int64)
        cm[:, 0] = 20
        report = report_from_confusion(cm)
        assert report.accuracy == pytest.approx(0.2)
        assert report.macro_precision == pytest.approx(0.04)
        assert report.macro_recall == pytest.approx(0.2)

    def test_accuracy_reconstructable_from_confusion(self):
        cm = padded([[5, 1, 0], [2, 7, 1], [0, 3, 9]])
        report = report_from_confusion(cm)
        emitted = np.asarray(report.confusion)
        assert report.accuracy == np.trace(emitted) / emitted.sum()

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            report_from_confusion(np.zeros((5, 5), dtype=np.int64))


class TestEvaluate:
    def test_on_separable_data(self):
        dataset = make_dataset(40, 16, [Mode.WALK, Mode.CAR], seed=3)
        cfg = TrainConfig(hidden_dims=(16,), learning_rate=0.5, epochs=40, split_seed=5)
        model, log = train(dataset, cfg)
        test_items = [item for item in dataset if item[0].segment_id in set(log.test_ids)]
        report = evaluate(model, test_items)
        assert report.accuracy >= 0.9
        total = sum(sum(row) for row in report.confusion)
        assert total == len(test_items)

    def test_empty_test_set(self):
        dataset = make_dataset(5, 8, [Mode.WALK, Mode.CAR])
        model, _ = train(dataset, TrainConfig(epochs=1))
        with pytest.raises(ValueError, match="empty"):
            evaluate(model, [])


def four_variant_store(n_per_class=12, dim=8, seed=0):
    variants = {}
    for rule in CombineRule:
        d = dim * 2 if rule is CombineRule.CONCATENATION else dim
        dataset = make_dataset(n_per_class, d, [Mode.WALK, Mode.BUS, Mode.CAR], seed=seed, rule=rule)
        variants[rule] = [emb for emb, _ in dataset]
    return variants


class TestRunAblation:
    CFG = TrainConfig(hidden_dims=(8,), learning_rate=0.3, epochs=8, split_seed=7)

    def test_four_rows_identical_membership(self):
        result = run_ablation(four_variant_store(), self.CFG)
        assert set(result.reports) == set(CombineRule)
        assert len(result.test_ids) > 0
        assert result.input_dims[CombineRule.CONCATENATION] == 16
        assert result.input_dims[CombineRule.FUSION] == 8

    def test_accuracy_matches_confusion_everywhere(self):
        result = run_ablation(four_variant_store(), self.CFG)
        for rule, report in result.reports.items():
            cm = np.asarray(report.confusion)
            assert report.accuracy == np.trace(cm) / cm.sum(), rule

    def test_missing_segment_alignment_error(self):
        variants = four_variant_store()
        variants[CombineRule.FUSION] = variants[CombineRule.FUSION][:-1]
        with pytest.raises(AlignmentError, match="fusion"):
            run_ablation(variants, self.CFG)

    def test_missing_variant_alignment_error(self):
        variants = four_variant_store()
        del variants[CombineRule.TEXT_ONLY]
        with pytest.raises(AlignmentError, match="text_only"):
            run_ablation(variants, self.CFG)

    def test_table_rendering(self):
        result = run_ablation(four_variant_store(), self.CFG)
        table = format_table({rule.value: rep for rule, rep in result.reports.items()})
        assert "Acc (%)" in table
        assert "concatenation" in table
        assert len({len(line) for line in table.strip().splitlines()}) <= 2
