"""Classifier evaluation: confusion matrix, macro metrics, ablation grid.

Per-class precision/recall/F1 come straight from the confusion matrix with
0/0 defined as 0; macro averages are unweighted means over the classes
actually present in the test set (absent classes are excluded and
flagged). The ablation harness trains one model per combination rule on
identical splits and emits an aligned plain-text metrics table.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .embedding import CombineRule, SceneEmbedding
from .trajectory import MODES, Mode

if TYPE_CHECKING:  # pragma: no cover
    from .mlp import MlpModel, TrainConfig, TrainLog

N_CLASSES = 5


class AlignmentError(ValueError):
    """Embedding variants do not cover the same segment set."""


@dataclass(frozen=True)
class PerClass:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: tuple[tuple[int, ...], ...]  # rows = true class, cols = predicted
    per_class: dict[str, PerClass]
    absent_classes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": [list(row) for row in self.confusion],
            "per_class": {
                name: {
                    "precision": pc.precision,
                    "recall": pc.recall,
                    "f1": pc.f1,
                    "support": pc.support,
                }
                for name, pc in self.per_class.items()
            },
            "absent_classes": list(self.absent_classes),
        }


def confusion_matrix(
    y_true: Sequence[int], y_pred: Sequence[int], n_classes: int = N_CLASSES
) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def report_from_confusion(confusion: np.ndarray) -> EvalReport:
    """Build the full metrics report from a 5x5 count matrix."""
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.shape != (N_CLASSES, N_CLASSES):
        raise ValueError(f"expected a {N_CLASSES}x{N_CLASSES} confusion matrix, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    accuracy = float(np.trace(cm)) / total

    per_class: dict[str, PerClass] = {}
    present_p, present_r, present_f1 = [], [], []
    absent: list[str] = []
    for i, mode in enumerate(MODES):
        support = int(cm[i, :].sum())
        precision = _safe_div(float(cm[i, i]), float(cm[:, i].sum()))
        recall = _safe_div(float(cm[i, i]), float(support))
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        per_class[mode.value] = PerClass(precision=precision, recall=recall, f1=f1, support=support)
        if support == 0:
            absent.append(mode.value)
        else:
            present_p.append(precision)
            present_r.append(recall)
            present_f1.append(f1)

    return EvalReport(
        accuracy=accuracy,
        macro_precision=float(np.mean(present_p)),
        macro_recall=float(np.mean(present_r)),
        macro_f1=float(np.mean(present_f1)),
        confusion=tuple(tuple(int(v) for v in row) for row in cm),
        per_class=per_class,
        absent_classes=tuple(absent),
    )


def evaluate(model: "MlpModel", dataset: Sequence[tuple[SceneEmbedding, Mode]]) -> EvalReport:
    """Evaluate a trained model on a labeled embedding set."""
    if not dataset:
        raise ValueError("empty test set")
    x = np.stack([emb.combined for emb, _ in dataset])
    y_true = np.array([MODES.index(mode) for _, mode in dataset], dtype=np.int64)
    y_pred = model.predict(x)
    return report_from_confusion(confusion_matrix(y_true, y_pred))


@dataclass(frozen=True)
class AblationResult:
    reports: dict[CombineRule, EvalReport]
    test_ids: tuple[str, ...]
    input_dims: dict[CombineRule, int]

    def to_dict(self) -> dict:
        return {
            "reports": {rule.value: rep.to_dict() for rule, rep in self.reports.items()},
            "test_ids": list(self.test_ids),
            "input_dims": {rule.value: dim for rule, dim in self.input_dims.items()},
        }


ABLATION_RULES = (
    CombineRule.IMAGE_ONLY,
    CombineRule.TEXT_ONLY,
    CombineRule.FUSION,
    CombineRule.CONCATENATION,
)


def run_ablation(
    variants: dict[CombineRule, list[SceneEmbedding]], cfg: "TrainConfig"
) -> AblationResult:
    """Train and evaluate one model per combination rule on identical splits.

    All four variants must cover exactly the same segment ids; the shared
    split seed plus id-sorted splitting guarantees identical test
    membership across rows.
    """
    from .mlp import stratified_split, train

    missing_rules = [r for r in ABLATION_RULES if r not in variants]
    if missing_rules:
        raise AlignmentError(f"missing embedding variants: {[r.value for r in missing_rules]}")
    id_sets = {rule: {emb.segment_id for emb in embs} for rule, embs in variants.items()}
    reference = id_sets[CombineRule.CONCATENATION]
    for rule, ids in id_sets.items():
        diff = reference.symmetric_difference(ids)
        if diff:
            raise AlignmentError(
                f"variant {rule.value} misaligned with concatenation on segments: "
                f"{sorted(diff)[:5]}"
            )

    reports: dict[CombineRule, EvalReport] = {}
    input_dims: dict[CombineRule, int] = {}
    test_ids: Optional[tuple[str, ...]] = None
    for rule in ABLATION_RULES:
        dataset = _labeled(variants[rule])
        model, log = train(dataset, cfg)
        _, _, test_items = stratified_split(dataset, cfg)
        reports[rule] = evaluate(model, test_items)
        input_dims[rule] = model.input_dim
        ids = tuple(sorted(log.test_ids))
        if test_ids is None:
            test_ids = ids
        elif ids != test_ids:
            raise AlignmentError(f"test membership diverged for variant {rule.value}")
    assert test_ids is not None
    return AblationResult(reports=reports, test_ids=test_ids, input_dims=input_dims)


def _labeled(embeddings: list[SceneEmbedding]) -> list[tuple[SceneEmbedding, Mode]]:
    dataset = []
    for emb in embeddings:
        if emb.mode_label is None:
            raise ValueError(f"segment {emb.segment_id} has no mode label")
        dataset.append((emb, emb.mode_label))
    return dataset


def format_table(rows: dict[str, EvalReport]) -> str:
    """Aligned plain-text metrics table (accuracy/precision/recall/F-score)."""
    header = f"{'Model':<16} {'Acc (%)':>8} {'Precision (%)':>14} {'Recall (%)':>11} {'F-Score (%)':>12}"
    lines = [header, "-" * len(header)]
    for name, rep in rows.items():
        lines.append(
            f"{name:<16} {100 * rep.accuracy:>8.1f} {100 * rep.macro_precision:>14.1f} "
            f"{100 * rep.macro_recall:>11.1f} {100 * rep.macro_f1:>12.1f}"
        )
    return "\n".join(lines) + "\n"


def write_report(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, separators=(",", ":"))
        fh.write("\n")


def read_report(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
