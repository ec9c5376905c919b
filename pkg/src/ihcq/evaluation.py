"""Instance-segmentation evaluation: greedy confidence-ordered matching,
TP/FP/FN accounting, precision-recall curves, average precision and mAP
over classes and IoU thresholds.

Everything here is pure and deterministic: predictions are ranked by
(confidence desc, id asc) before any decision, so results never depend on
input ordering, and applying any strictly increasing transform to the
confidences leaves every output unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    CellClass,
    EvaluationConfig,
    GroundTruthInstance,
    PredictionInstance,
    check_single_family,
    tie_break_key,
)
from .errors import EmptyDatasetError, InvalidInputError
from .masks import iou

TP = "TP"
FP = "FP"


@dataclass(frozen=True)
class MatchRecord:
    """Outcome for one prediction, in rank order."""

    pred_id: str
    label: str  # TP or FP
    gt_id: str | None = None
    iou: float | None = None


@dataclass(frozen=True)
class MatchResult:
    records: tuple[MatchRecord, ...]
    unmatched_gt_ids: tuple[str, ...]

    @property
    def tp_count(self) -> int:
        return sum(1 for r in self.records if r.label == TP)

    @property
    def fp_count(self) -> int:
        return sum(1 for r in self.records if r.label == FP)

    @property
    def fn_count(self) -> int:
        return len(self.unmatched_gt_ids)

    @property
    def total_gt(self) -> int:
        return self.tp_count + self.fn_count


@dataclass(frozen=True)
class PRCurve:
    """Cumulative (precision, recall) points, one per ranked prediction."""

    points: tuple[tuple[float, float], ...]
    total_gt: int

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((float(p), float(r)) for p, r in self.points))
        for p, r in self.points:
            if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
                raise InvalidInputError(f"PR point ({p}, {r}) outside the unit square")
        recalls = [r for _, r in self.points]
        if any(b < a for a, b in zip(recalls, recalls[1:])):
            raise InvalidInputError("recall must be non-decreasing along the curve")

    def to_json(self) -> dict:
        return {"points": [[p, r] for p, r in self.points], "total_gt": self.total_gt}


def _ranked(preds, cell_class):
    chosen = [p for p in preds if cell_class is None or p.cell_class == cell_class]
    return sorted(chosen, key=tie_break_key)


def _best_available(pred, gts, taken: set[str]):
    """Unclaimed ground truth of maximal IoU (ties: lowest id)."""
    best = None
    best_iou = -1.0
    for gt in gts:
        if gt.id in taken:
            continue
        value = iou(pred.mask, gt.mask)
        if value > best_iou:
            best, best_iou = gt, value
    return best, best_iou


def match_instances(
    preds: list[PredictionInstance],
    gts: list[GroundTruthInstance],
    iou_threshold: float,
    cell_class: CellClass | None = None,
) -> MatchResult:
    """Greedy matching in descending-confidence order.

    Each prediction claims the still-unmatched ground truth of maximal
    IoU; the claim stands (TP) iff that IoU reaches `iou_threshold`,
    otherwise the prediction is a false positive. Ground truths are never
    matched twice; leftovers are false negatives.
    """
    if cell_class is not None:
        gts = [g for g in gts if g.cell_class == cell_class]
    gts = sorted(gts, key=lambda g: g.id)
    taken: set[str] = set()
    records = []
    for pred in _ranked(preds, cell_class):
        best, best_iou = _best_available(pred, gts, taken)
        if best is not None and best_iou >= iou_threshold:
            taken.add(best.id)
            records.append(MatchRecord(pred.id, TP, best.id, best_iou))
        else:
            records.append(MatchRecord(pred.id, FP))
    unmatched = tuple(g.id for g in gts if g.id not in taken)
    return MatchResult(records=tuple(records), unmatched_gt_ids=unmatched)


def pr_curve(match: MatchResult, total_gt: int | None = None) -> PRCurve:
    """Cumulative precision/recall after each ranked prediction."""
    if total_gt is None:
        total_gt = match.total_gt
    if total_gt < 0:
        raise InvalidInputError("total_gt must be non-negative")
    if total_gt == 0 and match.tp_count > 0:
        raise InvalidInputError("matched predictions reported against zero ground truths")
    tp = fp = 0
    points = []
    for record in match.records:
        if record.label == TP:
            tp += 1
        else:
            fp += 1
        recall = tp / total_gt if total_gt else 0.0
        points.append((tp / (tp + fp), recall))
    return PRCurve(points=tuple(points), total_gt=total_gt)


def average_precision(curve: PRCurve) -> float:
    """Area under the curve: monotone precision envelope, left Riemann sum.

    Each point's precision is raised to the maximum precision achieved at
    any recall at least as large (suffix max over the ranked sequence),
    then summed over recall increments starting from zero. Recall never
    attained contributes nothing; an empty curve scores 0.
    """
    if not curve.points:
        return 0.0
    envelope = [p for p, _ in curve.points]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for env_p, (_, recall) in zip(envelope, curve.points):
        ap += (recall - prev_recall) * env_p
        prev_recall = recall
    return ap


Sample = tuple[list[PredictionInstance], list[GroundTruthInstance]]


def class_curve(samples: list[Sample], cell_class: CellClass, iou_threshold: float) -> PRCurve:
    """Pooled PR curve over many patches.

    Matching runs within each patch (masks only compare in one frame);
    the labelled predictions are then ranked globally by confidence, as
    usual for dataset-level detection metrics.
    """
    entries = []
    total_gt = 0
    for sample_idx, (preds, gts) in enumerate(samples):
        match = match_instances(preds, gts, iou_threshold, cell_class=cell_class)
        ranked = _ranked(preds, cell_class)
        total_gt += sum(1 for g in gts if g.cell_class == cell_class)
        for pred, record in zip(ranked, match.records):
            entries.append(((-pred.confidence, pred.id, sample_idx), record.label))
    entries.sort(key=lambda e: e[0])
    tp = fp = 0
    points = []
    for _, label in entries:
        if label == TP:
            tp += 1
        else:
            fp += 1
        recall = tp / total_gt if total_gt else 0.0
        points.append((tp / (tp + fp), recall))
    return PRCurve(points=tuple(points), total_gt=total_gt)


def class_ap(
    preds: list[PredictionInstance],
    gts: list[GroundTruthInstance],
    iou_threshold: float,
    cell_class: CellClass,
) -> float:
    match = match_instances(preds, gts, iou_threshold, cell_class=cell_class)
    return average_precision(pr_curve(match))


def _gt_classes(samples: list[Sample]) -> list[CellClass]:
    present = {g.cell_class for _, gts in samples for g in gts}
    return sorted(present, key=lambda c: c.value)


def _check_samples_family(samples: list[Sample]) -> None:
    classes = [p.cell_class for preds, _ in samples for p in preds]
    classes += [g.cell_class for _, gts in samples for g in gts]
    check_single_family(classes)


def map_at(
    preds: list[PredictionInstance],
    gts: list[GroundTruthInstance],
    iou_threshold: float,
) -> tuple[float, dict[CellClass, float]]:
    """Mean AP over the classes present in the ground truth.

    Classes with no ground-truth instances are skipped, not scored zero.
    """
    check_single_family([p.cell_class for p in preds] + [g.cell_class for g in gts])
    classes = _gt_classes([(preds, gts)])
    if not classes:
        raise EmptyDatasetError("no ground-truth instances to evaluate against")
    per_class = {c: class_ap(preds, gts, iou_threshold, c) for c in classes}
    return sum(per_class.values()) / len(per_class), per_class


def map_range(
    preds: list[PredictionInstance],
    gts: list[GroundTruthInstance],
    iou_thresholds: tuple[float, ...] | None = None,
) -> tuple[float, dict[float, float]]:
    """Mean of `map_at` over a threshold sweep (default 0.50:0.05:0.95)."""
    if iou_thresholds is None:
        iou_thresholds = EvaluationConfig().iou_thresholds
    per_threshold = {t: map_at(preds, gts, t)[0] for t in iou_thresholds}
    return sum(per_threshold.values()) / len(per_threshold), per_threshold


_DISCARDED = "discarded"


def _oth_labels(preds, gts, cell_class, iou_threshold):
    """Per-prediction Oth outcome (TP / FP / discarded), rank order."""
    same_gts = sorted((g for g in gts if g.cell_class == cell_class), key=lambda g: g.id)
    other_gts = sorted((g for g in gts if g.cell_class != cell_class), key=lambda g: g.id)
    taken: set[str] = set()
    taken_other: set[str] = set()
    ranked = _ranked(preds, cell_class)
    labels = []
    for pred in ranked:
        best, best_iou = _best_available(pred, same_gts, taken)
        if best is not None and best_iou >= iou_threshold:
            taken.add(best.id)
            labels.append(TP)
            continue
        confused, confused_iou = _best_available(pred, other_gts, taken_other)
        if confused is not None and confused_iou >= iou_threshold:
            taken_other.add(confused.id)
            labels.append(_DISCARDED)
        else:
            labels.append(FP)
    return ranked, labels, len(same_gts)


def oth_class_curve(
    samples: list[Sample], cell_class: CellClass, iou_threshold: float = 0.50
) -> PRCurve:
    """Pooled cross-class-confusion curve over many patches."""
    entries = []
    total_gt = 0
    for sample_idx, (preds, gts) in enumerate(samples):
        ranked, labels, gt_count = _oth_labels(preds, gts, cell_class, iou_threshold)
        total_gt += gt_count
        for pred, label in zip(ranked, labels):
            if label != _DISCARDED:
                entries.append(((-pred.confidence, pred.id, sample_idx), label))
    entries.sort(key=lambda e: e[0])
    tp = fp = 0
    points = []
    for _, label in entries:
        if label == TP:
            tp += 1
        else:
            fp += 1
        recall = tp / total_gt if total_gt else 0.0
        points.append((tp / (tp + fp), recall))
    return PRCurve(points=tuple(points), total_gt=total_gt)


def oth_curve(
    preds: list[PredictionInstance],
    gts: list[GroundTruthInstance],
    cell_class: CellClass,
    iou_threshold: float = 0.50,
) -> PRCurve:
    """PR curve isolating cross-class confusion.

    Matching runs exactly as for `pr_curve`, but a would-be false
    positive overlapping a still-unclaimed ground truth of another class
    at IoU >= threshold is discarded from the accumulation entirely
    (neither TP nor FP); each other-class ground truth can excuse at most
    one prediction.
    """
    return oth_class_curve([(preds, gts)], cell_class, iou_threshold)


@dataclass(frozen=True)
class ClassEvaluation:
    """Per-class slice of an evaluation report."""

    cell_class: CellClass
    gt_count: int
    pred_count: int
    ap_by_threshold: tuple[tuple[float, float], ...]
    pr_curves: tuple[tuple[str, PRCurve], ...]

    def ap_at(self, threshold: float) -> float | None:
        return dict(self.ap_by_threshold).get(threshold)

    @property
    def ap_range(self) -> float:
        values = [ap for _, ap in self.ap_by_threshold]
        return sum(values) / len(values)


@dataclass(frozen=True)
class EvalReport:
    """Per-class APs plus mAP aggregates, with PR points for plotting."""

    model: str
    tau: float
    iou_thresholds: tuple[float, ...]
    classes: tuple[ClassEvaluation, ...]
    map_by_threshold: tuple[tuple[float, float], ...]

    def map_at(self, threshold: float) -> float | None:
        return dict(self.map_by_threshold).get(threshold)

    @property
    def map50(self) -> float | None:
        return self.map_at(0.50)

    @property
    def map75(self) -> float | None:
        return self.map_at(0.75)

    @property
    def map_range(self) -> float:
        values = [m for _, m in self.map_by_threshold]
        return sum(values) / len(values)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "tau": self.tau,
            "iou_thresholds": list(self.iou_thresholds),
            "map": {
                "by_threshold": {f"{t:.2f}": m for t, m in self.map_by_threshold},
                "at_050": self.map50,
                "at_075": self.map75,
                "range": self.map_range,
            },
            "classes": [
                {
                    "class": ce.cell_class.value,
                    "gt_count": ce.gt_count,
                    "pred_count": ce.pred_count,
                    "ap_by_threshold": {f"{t:.2f}": ap for t, ap in ce.ap_by_threshold},
                    "ap_050": ce.ap_at(0.50),
                    "ap_075": ce.ap_at(0.75),
                    "ap_range": ce.ap_range,
                    "pr_curves": {name: c.to_json() for name, c in ce.pr_curves},
                }
                for ce in self.classes
            ],
        }

    def to_text(self) -> str:
        """Three-metric table: one row for all tumor cells, one per class."""

        def fmt(v):
            return "  -  " if v is None else f"{v:.2f}"

        header = f"{'Class':<28} {'mAP@0.50':>9} {'mAP@0.75':>9} {'mAP@[.50:.05:.95]':>18}"
        lines = [header, "-" * len(header)]
        lines.append(
            f"{'All tumor cells':<28} {fmt(self.map50):>9} {fmt(self.map75):>9} "
            f"{fmt(self.map_range):>18}"
        )
        for ce in self.classes:
            lines.append(
                f"{ce.cell_class.value:<28} {fmt(ce.ap_at(0.50)):>9} "
                f"{fmt(ce.ap_at(0.75)):>9} {fmt(ce.ap_range):>18}"
            )
        lines.append(f"(model: {self.model or 'unnamed'}, tau: {self.tau})")
        return "\n".join(lines)


def evaluate_samples(
    samples: list[Sample],
    config: EvaluationConfig | None = None,
    model: str = "",
) -> EvalReport:
    """Full evaluation over one patch or a pooled set of patches:
    confidence filter, per-class APs at every threshold, mAPs, and PR
    curves at 0.50 / 0.75 / Oth."""
    if config is None:
        config = EvaluationConfig()
    if config.tau > 0.0:
        samples = [
            ([p for p in preds if p.confidence >= config.tau], gts)
            for preds, gts in samples
        ]
    _check_samples_family(samples)
    classes = _gt_classes(samples)
    if not classes:
        raise EmptyDatasetError("no ground-truth instances to evaluate against")

    class_rows = []
    ap_table: dict[float, list[float]] = {t: [] for t in config.iou_thresholds}
    for c in classes:
        ap_by_threshold = []
        curves: list[tuple[str, PRCurve]] = []
        for t in config.iou_thresholds:
            curve = class_curve(samples, c, t)
            ap = average_precision(curve)
            ap_by_threshold.append((t, ap))
            ap_table[t].append(ap)
            if t in (0.50, 0.75):
                curves.append((f"{t:.2f}", curve))
        curves.append(("oth", oth_class_curve(samples, c, 0.50)))
        class_rows.append(
            ClassEvaluation(
                cell_class=c,
                gt_count=sum(1 for _, gts in samples for g in gts if g.cell_class == c),
                pred_count=sum(1 for preds, _ in samples for p in preds if p.cell_class == c),
                ap_by_threshold=tuple(ap_by_threshold),
                pr_curves=tuple(curves),
            )
        )
    map_by_threshold = tuple(
        (t, sum(aps) / len(aps)) for t, aps in ap_table.items()
    )
    return EvalReport(
        model=model,
        tau=config.tau,
        iou_thresholds=config.iou_thresholds,
        classes=tuple(class_rows),
        map_by_threshold=map_by_threshold,
    )


def evaluate(
    preds: list[PredictionInstance],
    gts: list[GroundTruthInstance],
    config: EvaluationConfig | None = None,
    model: str = "",
) -> EvalReport:
    """Single-patch evaluation; see `evaluate_samples`."""
    return evaluate_samples([(preds, gts)], config=config, model=model)


def comparison_rows(reports: list[EvalReport]) -> list[dict]:
    """Side-by-side model rows (one line per evaluated prediction set)."""
    return [
        {
            "model": r.model,
            "map_050": r.map50,
            "map_075": r.map75,
            "map_range": r.map_range,
            "tau": r.tau,
        }
        for r in reports
    ]
