"""
Eval Library

k-fold cross-validation of the decision tree, pooled confusion matrices,
precision/recall metrics and report rendering (text table or JSON).
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import TypedDict

from classifier_lib import DecisionTree, TreeParams, predict_all, train
from errors import DomainError, EvaluationError
from features_lib import DEFAULT_WINDOW_SIZES, Scale, feature_indices
from layouts.report_layout import (
    MACRO_LABEL,
    PER_CLASS_HEAD,
    PER_CLASS_ROW,
    REPORT_SUMMARY,
    REPORT_TITLE,
    TABLE_CAPTIONS,
    TABLE_HEAD,
    TABLE_ROW,
    UNDEFINED,
)
from trace_model import MODE_ORDER, FeatureVector, Mode

logger = logging.getLogger(__name__)

N_CLASSES = len(MODE_ORDER)

# Scale subsets compared by the ablation, in report order
ABLATION_SCALES: Dict[str, Tuple[Scale, ...]] = {
    "log": (Scale.LOGARITHMIC,),
    "linear": (Scale.LINEAR,),
    "both": (Scale.LOGARITHMIC, Scale.LINEAR),
}


@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 counts, rows = ground truth, columns = predicted, in Mode order"""

    counts: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        array = np.asarray(self.counts)
        if array.shape != (N_CLASSES, N_CLASSES):
            raise DomainError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}")
        if np.any(array < 0):
            raise DomainError("confusion matrix counts must be >= 0")
        object.__setattr__(self, "counts", tuple(tuple(int(c) for c in row) for row in array))

    @classmethod
    def zeros(cls) -> "ConfusionMatrix":
        return cls(((0,) * N_CLASSES,) * N_CLASSES)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Mode, Mode]]) -> "ConfusionMatrix":
        """Count (truth, predicted) pairs"""
        counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        for truth, predicted in pairs:
            counts[truth.index, predicted.index] += 1
        return cls(counts)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.array.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.array + other.array)

    def scaled(self, factor: int) -> "ConfusionMatrix":
        if factor < 1:
            raise DomainError("scale factor must be a positive integer")
        return ConfusionMatrix(self.array * factor)


@dataclass(frozen=True)
class MetricsReport:
    """
    Precision and recall derived from a confusion matrix, all in percent

    Per-class entries and normalized cells are None where the denominator
    is zero; macro means only average the defined classes.
    """

    matrix: ConfusionMatrix
    precision: Dict[Mode, Optional[float]]
    recall: Dict[Mode, Optional[float]]
    macro_precision: Optional[float]
    macro_recall: Optional[float]
    accuracy: float
    row_normalized: Tuple[Tuple[Optional[float], ...], ...]
    column_normalized: Tuple[Tuple[Optional[float], ...], ...]


class ReportDict(TypedDict):
    counts: List[List[int]]
    precision: Dict[str, Optional[float]]
    recall: Dict[str, Optional[float]]
    macro_precision: Optional[float]
    macro_recall: Optional[float]
    accuracy: float
    total: int
    row_normalized: List[List[Optional[float]]]
    column_normalized: List[List[Optional[float]]]


# ---- Folds ----

def kfold_indices(
    labels: Sequence[Optional[Mode]],
    k: int,
    seed: int,
    stratified: bool = False,
) -> List[np.ndarray]:
    """
    Assign instance positions to k folds

    The positions are shuffled with a seeded generator and dealt
    round-robin, so fold sizes differ by at most one. Stratified mode
    shuffles each class separately and keeps dealing where the previous
    class stopped, which preserves the same size profile.

    Args:
        labels: One label per instance (only used when stratified)
        k: Number of folds, >= 2
        seed: Shuffle seed
        stratified: Deal classes separately

    Returns:
        k arrays of positions; disjoint, covering range(len(labels))
    """
    n = len(labels)
    if k < 2:
        raise EvaluationError(f"k must be >= 2, got {k}")
    if n < k:
        raise EvaluationError(f"cannot split {n} instances into {k} folds")

    rng = np.random.default_rng(seed)
    if not stratified:
        order = rng.permutation(n)
    else:
        groups: List[np.ndarray] = []
        for mode in list(MODE_ORDER) + [None]:
            members = np.array([i for i, label in enumerate(labels) if label == mode], dtype=np.int64)
            if members.size:
                groups.append(rng.permutation(members))
        order = np.concatenate(groups)

    folds = [order[i::k] for i in range(k)]
    logger.debug("Fold sizes: %s", [len(f) for f in folds])
    return folds


def kfold_split(
    instances: Sequence[FeatureVector],
    k: int,
    seed: int,
    stratified: bool = False,
) -> List[List[FeatureVector]]:
    """Partition instances into k disjoint folds (see kfold_indices)"""
    folds = kfold_indices([inst.label for inst in instances], k, seed, stratified)
    return [[instances[i] for i in fold] for fold in folds]


# ---- Cross-validation ----

def confusion_from_predictions(truths: Sequence[Mode], predictions: Sequence[Mode]) -> ConfusionMatrix:
    if len(truths) != len(predictions):
        raise EvaluationError("truth and prediction counts differ")
    return ConfusionMatrix.from_pairs(zip(truths, predictions))


def evaluate_model(tree: DecisionTree, instances: Sequence[FeatureVector]) -> ConfusionMatrix:
    """Confusion matrix of a trained tree on labeled instances"""
    if any(inst.label is None for inst in instances):
        raise EvaluationError("every evaluated instance needs a label")
    return confusion_from_predictions([inst.label for inst in instances], predict_all(tree, instances))


def cross_validate(
    instances: Sequence[FeatureVector],
    k: int = 5,
    tree_params: TreeParams = TreeParams(),
    seed: int = 0,
    stratified: bool = False,
    jobs: int = 1,
) -> ConfusionMatrix:
    """
    Pooled k-fold confusion matrix

    Each fold is predicted by a tree trained on the other k-1 folds, and
    all (truth, prediction) pairs are counted into one matrix.

    Args:
        instances: Labeled feature vectors
        k: Number of folds
        tree_params: Growth limits for every fold's tree
        seed: Fold shuffle seed
        stratified: Use stratified folds
        jobs: Folds evaluated concurrently

    Returns:
        Pooled ConfusionMatrix; its total equals len(instances)

    Raises:
        EvaluationError: unlabeled instances or k out of range
        TrainingError: a training complement is too small
    """
    if any(inst.label is None for inst in instances):
        raise EvaluationError("cross-validation needs labeled instances")
    folds = kfold_indices([inst.label for inst in instances], k, seed, stratified)

    def run_fold(fold_no: int) -> ConfusionMatrix:
        held_out = set(folds[fold_no].tolist())
        training = [inst for i, inst in enumerate(instances) if i not in held_out]
        testing = [instances[i] for i in folds[fold_no]]
        tree = train(training, tree_params, seed=seed)
        logger.debug("Fold %d: trained on %d, tested on %d", fold_no, len(training), len(testing))
        return evaluate_model(tree, testing)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_fold, range(k)))
    else:
        results = [run_fold(i) for i in range(k)]

    pooled = ConfusionMatrix.zeros()
    for matrix in results:
        pooled = pooled + matrix
    logger.info("Cross-validation: %d folds, %d instances", k, pooled.total)
    return pooled


def ablation(
    instances: Sequence[FeatureVector],
    k: int = 5,
    tree_params: TreeParams = TreeParams(),
    seed: int = 0,
    stratified: bool = False,
    windows: Optional[Sequence[int]] = None,
    window_sizes: Sequence[int] = DEFAULT_WINDOW_SIZES,
    jobs: int = 1,
) -> Dict[str, "MetricsReport"]:
    """Cross-validated metrics for log-only, linear-only and both scales"""
    reports: Dict[str, MetricsReport] = {}
    for name, scales in ABLATION_SCALES.items():
        params = tree_params.with_features(feature_indices(scales, windows, window_sizes))
        matrix = cross_validate(instances, k, params, seed, stratified, jobs)
        reports[name] = metrics(matrix)
    return reports


# ---- Metrics ----

def macro_mean(values: Iterable[Optional[float]]) -> Optional[float]:
    """Unweighted mean of the defined values, None when none are defined"""
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return float(np.mean(defined))


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    if denominator == 0:
        return None
    return 100.0 * numerator / denominator


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """
    Per-class and macro precision/recall of a confusion matrix

    Precision of a class is its diagonal count over its predicted column
    sum, recall is the diagonal over its ground-truth row sum.

    Raises:
        EvaluationError: the matrix is all zeros
    """
    counts = matrix.array.astype(float)
    total = counts.sum()
    if total == 0:
        raise EvaluationError("confusion matrix is empty")

    row_sums = counts.sum(axis=1)
    col_sums = counts.sum(axis=0)
    diagonal = np.diag(counts)

    precision = {mode: _ratio(diagonal[i], col_sums[i]) for i, mode in enumerate(MODE_ORDER)}
    recall = {mode: _ratio(diagonal[i], row_sums[i]) for i, mode in enumerate(MODE_ORDER)}

    row_normalized = tuple(
        tuple(_ratio(counts[r, c], row_sums[r]) for c in range(N_CLASSES)) for r in range(N_CLASSES)
    )
    column_normalized = tuple(
        tuple(_ratio(counts[r, c], col_sums[c]) for c in range(N_CLASSES)) for r in range(N_CLASSES)
    )

    return MetricsReport(
        matrix=matrix,
        precision=precision,
        recall=recall,
        macro_precision=macro_mean(precision.values()),
        macro_recall=macro_mean(recall.values()),
        accuracy=100.0 * float(diagonal.sum()) / float(total),
        row_normalized=row_normalized,
        column_normalized=column_normalized,
    )


# ---- Rendering ----

def report_to_dict(report: MetricsReport) -> ReportDict:
    return ReportDict(
        counts=[list(row) for row in report.matrix.counts],
        precision={mode.value: report.precision[mode] for mode in MODE_ORDER},
        recall={mode.value: report.recall[mode] for mode in MODE_ORDER},
        macro_precision=report.macro_precision,
        macro_recall=report.macro_recall,
        accuracy=report.accuracy,
        total=report.matrix.total,
        row_normalized=[list(row) for row in report.row_normalized],
        column_normalized=[list(row) for row in report.column_normalized],
    )


def _percent(value: Optional[float]) -> str:
    return UNDEFINED if value is None else f"{value:.2f}%"


def _mode_label(mode: Mode) -> str:
    return mode.value.capitalize()


def _table(caption: str, cells) -> List[str]:
    lines = [caption, TABLE_HEAD.format(*(_mode_label(m) for m in MODE_ORDER), corner="Truth \\ Pred")]
    for mode, row in zip(MODE_ORDER, cells):
        lines.append(TABLE_ROW.format(*(_percent(v) for v in row), label=_mode_label(mode)))
    return lines


def render_text(report: MetricsReport, title: str = "Cross-validation report") -> str:
    """Confusion tables (ground truth rows, predicted columns) plus per-class and macro figures"""
    lines = [
        REPORT_TITLE.format(title=title),
        REPORT_SUMMARY.format(total=report.matrix.total, accuracy=_percent(report.accuracy)),
        "",
    ]
    lines += _table(TABLE_CAPTIONS["precision"], report.column_normalized)
    lines.append("")
    lines += _table(TABLE_CAPTIONS["recall"], report.row_normalized)
    lines.append("")
    lines.append(PER_CLASS_HEAD.format(corner="", precision="Precision", recall="Recall"))
    for mode in MODE_ORDER:
        lines.append(PER_CLASS_ROW.format(
            label=_mode_label(mode),
            precision=_percent(report.precision[mode]),
            recall=_percent(report.recall[mode]),
        ))
    lines.append(PER_CLASS_ROW.format(
        label=MACRO_LABEL,
        precision=_percent(report.macro_precision),
        recall=_percent(report.macro_recall),
    ))
    return "\n".join(lines) + "\n"


def render_report(report: MetricsReport, fmt: str = "text", title: str = "Cross-validation report") -> bytes:
    """
    Render a report as UTF-8 bytes

    Args:
        report: Metrics to render
        fmt: "text" for the table layout, "json" for counts plus every derived metric
        title: Heading of the text layout

    Returns:
        Encoded report
    """
    if fmt == "json":
        return (json.dumps(report_to_dict(report), indent=2) + "\n").encode("utf-8")
    if fmt == "text":
        return render_text(report, title).encode("utf-8")
    raise DomainError(f"unknown report format '{fmt}'")


def render_ablation(reports: Dict[str, MetricsReport], fmt: str = "text") -> bytes:
    """Render one report per scale configuration"""
    if fmt == "json":
        payload = {name: report_to_dict(report) for name, report in reports.items()}
        return (json.dumps(payload, indent=2) + "\n").encode("utf-8")
    return b"\n".join(
        render_report(report, fmt, title=f"Scales: {name}") for name, report in reports.items()
    )
