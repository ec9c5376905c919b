"""Clinical quantification over accepted instances: nuclear
percent-positivity, four-tier membrane (HER2) scoring, confidence
filtering and the confidence-threshold sweep.

Scores are computed per patch; slide-level aggregation merges raw counts
(percentages do not average) and re-applies the decision rules.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    MEMBRANE_CLASSES,
    CellClass,
    StainKind,
    check_single_family,
)
from .errors import InvalidInputError, NoCellsError
from .evaluation import map_at

# Recommended confidence cutoffs per predictor style: SOLOv2-like models
# are usually well served around 0.3, Mask-RCNN-like ones around 0.6.
RECOMMENDED_TAU_SOLO = 0.3
RECOMMENDED_TAU_MASK_RCNN = 0.6

# Decision cutoff from the clinical four-tier membrane-staining table:
# a category drives the score only when it exceeds this percentage.
MEMBRANE_RULE_PERCENT = 10.0
BOUNDARY_FLAG_MARGIN = 0.5


def recommended_tau(model: str) -> float:
    """Default confidence cutoff for a predictor named by its style."""
    if "rcnn" in model.lower().replace("-", "").replace("_", ""):
        return RECOMMENDED_TAU_MASK_RCNN
    return RECOMMENDED_TAU_SOLO


def filter_by_confidence(preds, tau: float):
    """Keep exactly the predictions with confidence >= tau, order intact."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidInputError("tau must lie in [0, 1]")
    return [p for p in preds if p.confidence >= tau]


@dataclass(frozen=True)
class NuclearScore:
    """Percent of positively stained tumor nuclei."""

    positive_count: int
    negative_count: int

    def __post_init__(self):
        if self.positive_count < 0 or self.negative_count < 0:
            raise InvalidInputError("counts must be non-negative")
        if self.total == 0:
            raise NoCellsError("nuclear score requires at least one cell")

    @property
    def total(self) -> int:
        return self.positive_count + self.negative_count

    @property
    def percent_positive(self) -> float:
        return 100.0 * self.positive_count / self.total

    def to_json(self) -> dict:
        return {
            "stain_kind": StainKind.NUCLEAR.value,
            "positive_count": self.positive_count,
            "negative_count": self.negative_count,
            "total": self.total,
            "percent_positive": self.percent_positive,
        }


@dataclass(frozen=True)
class HER2Score:
    """Four-tier membrane score with category counts and percentages."""

    counts: tuple[tuple[CellClass, int], ...]
    score: str  # "0" | "1+" | "2+" | "3+"
    assessment: str  # Negative | Equivocal | Positive
    boundary_flag: bool

    @property
    def total(self) -> int:
        return sum(n for _, n in self.counts)

    def percentages(self) -> dict[CellClass, float]:
        total = self.total
        return {c: 100.0 * n / total for c, n in self.counts}

    def to_json(self) -> dict:
        return {
            "stain_kind": StainKind.MEMBRANE.value,
            "counts": {c.value: n for c, n in self.counts},
            "percentages": {c.value: p for c, p in self.percentages().items()},
            "total": self.total,
            "score": self.score,
            "assessment": self.assessment,
            "boundary_flag": self.boundary_flag,
        }


def _family_check(instances, expected: StainKind, op: str):
    classes = [i.cell_class for i in instances]
    kind = check_single_family(classes)
    if kind is not None and kind is not expected:
        raise InvalidInputError(f"{op} requires {expected.value} classes, got {kind.value}")


def nuclear_quantify(instances) -> NuclearScore:
    """Count immunopositive vs immunonegative cells.

    Rejects empty input: a patch with no tumor cells has no percentage,
    it must never read as 0%.
    """
    instances = list(instances)
    if not instances:
        raise NoCellsError("no cells to quantify")
    _family_check(instances, StainKind.NUCLEAR, "nuclear quantification")
    positive = sum(1 for i in instances if i.cell_class is CellClass.IMMUNOPOSITIVE)
    return NuclearScore(positive_count=positive, negative_count=len(instances) - positive)


def membrane_decision(percentages: dict[CellClass, float]) -> tuple[str, str]:
    """Apply the four-tier rules in descending-score order.

    Strict "> 10%" per rule; the faint-incomplete-in-at-most-10% case
    falls through to score 0.
    """
    if percentages.get(CellClass.M3_INTENSE_COMPLETE, 0.0) > MEMBRANE_RULE_PERCENT:
        return "3+", "Positive"
    if percentages.get(CellClass.M2_MODERATE_COMPLETE, 0.0) > MEMBRANE_RULE_PERCENT:
        return "2+", "Equivocal"
    if percentages.get(CellClass.M1_FAINT_INCOMPLETE, 0.0) > MEMBRANE_RULE_PERCENT:
        return "1+", "Negative"
    return "0", "Negative"


def her2_quantify(instances) -> HER2Score:
    """Score membrane staining over all tumor cells in the input."""
    instances = list(instances)
    if not instances:
        raise NoCellsError("no cells to quantify")
    _family_check(instances, StainKind.MEMBRANE, "membrane quantification")
    counts = {c: 0 for c in MEMBRANE_CLASSES}
    for inst in instances:
        counts[inst.cell_class] += 1
    return _score_from_counts(counts)


def _score_from_counts(counts: dict[CellClass, int]) -> HER2Score:
    total = sum(counts.values())
    percentages = {c: 100.0 * n / total for c, n in counts.items()}
    score, assessment = membrane_decision(percentages)
    boundary = any(
        abs(percentages[c] - MEMBRANE_RULE_PERCENT) < BOUNDARY_FLAG_MARGIN
        for c in (
            CellClass.M1_FAINT_INCOMPLETE,
            CellClass.M2_MODERATE_COMPLETE,
            CellClass.M3_INTENSE_COMPLETE,
        )
    )
    return HER2Score(
        counts=tuple((c, counts[c]) for c in MEMBRANE_CLASSES),
        score=score,
        assessment=assessment,
        boundary_flag=boundary,
    )


def merge_nuclear_scores(scores: list[NuclearScore]) -> NuclearScore:
    """Slide-level merge: counts add, the percentage is recomputed."""
    if not scores:
        raise NoCellsError("nothing to merge")
    return NuclearScore(
        positive_count=sum(s.positive_count for s in scores),
        negative_count=sum(s.negative_count for s in scores),
    )


def merge_her2_scores(scores: list[HER2Score]) -> HER2Score:
    """Slide-level merge: category counts add, rules re-applied."""
    if not scores:
        raise NoCellsError("nothing to merge")
    merged = {c: 0 for c in MEMBRANE_CLASSES}
    for s in scores:
        for c, n in s.counts:
            merged[c] += n
    return _score_from_counts(merged)


@dataclass(frozen=True)
class ThresholdSweepResult:
    """mAP@0.50 across a confidence-threshold grid."""

    grid: tuple[float, ...]
    map_values: tuple[float, ...]
    best_tau: float

    @property
    def best_map(self) -> float:
        return self.map_values[self.grid.index(self.best_tau)]

    def to_csv(self) -> str:
        lines = ["tau,map_050"]
        lines += [f"{t},{m}" for t, m in zip(self.grid, self.map_values)]
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "grid": list(self.grid),
            "map_050": list(self.map_values),
            "best_tau": self.best_tau,
            "best_map": self.best_map,
        }


def sweep_threshold(preds, gts, grid) -> ThresholdSweepResult:
    """Evaluate mAP@0.50 after filtering at each grid value.

    The reported argmax is the smallest grid value attaining the maximum.
    """
    grid = tuple(float(t) for t in grid)
    if not grid:
        raise InvalidInputError("sweep grid must be non-empty")
    if any(not 0.0 <= t <= 1.0 for t in grid):
        raise InvalidInputError("sweep grid values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidInputError("sweep grid must be strictly increasing")
    values = []
    for tau in grid:
        kept = filter_by_confidence(preds, tau)
        values.append(map_at(kept, gts, 0.50)[0])
    best_tau = grid[0]
    best_value = values[0]
    for tau, value in zip(grid[1:], values[1:]):
        if value > best_value:
            best_tau, best_value = tau, value
    return ThresholdSweepResult(grid=grid, map_values=tuple(values), best_tau=best_tau)
