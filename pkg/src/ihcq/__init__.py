"""ihcq: quantification and evaluation workbench for IHC breast-cancer
images — biomarker scoring from instance segmentations, instance-level
mAP evaluation, and the annotation-correction workflow's storage and
service layers."""

from .core import (
    Biomarker,
    CellClass,
    EvaluationConfig,
    GroundTruthInstance,
    PatchRegion,
    PredictionInstance,
    SlideRecord,
    StainKind,
    default_iou_thresholds,
    validate_patch,
)
from .documents import Annotation, AnnotationDocument, PredictionFile, Provenance
from .evaluation import (
    EvalReport,
    MatchResult,
    PRCurve,
    average_precision,
    evaluate,
    map_at,
    map_range,
    match_instances,
    oth_curve,
    pr_curve,
)
from .masks import BinaryMask, Polygon, intersection_area, iou, rasterize, union_area
from .scoring import (
    HER2Score,
    NuclearScore,
    ThresholdSweepResult,
    filter_by_confidence,
    her2_quantify,
    nuclear_quantify,
    sweep_threshold,
)
from .baseline import BaselineNucleiSegmenter, separate_stains
from .store import SlideStore, TilePyramid

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationDocument",
    "BaselineNucleiSegmenter",
    "Biomarker",
    "BinaryMask",
    "CellClass",
    "EvalReport",
    "EvaluationConfig",
    "GroundTruthInstance",
    "HER2Score",
    "MatchResult",
    "NuclearScore",
    "PRCurve",
    "PatchRegion",
    "Polygon",
    "PredictionFile",
    "PredictionInstance",
    "Provenance",
    "SlideRecord",
    "SlideStore",
    "StainKind",
    "ThresholdSweepResult",
    "TilePyramid",
    "average_precision",
    "default_iou_thresholds",
    "evaluate",
    "filter_by_confidence",
    "her2_quantify",
    "intersection_area",
    "iou",
    "map_at",
    "map_range",
    "match_instances",
    "nuclear_quantify",
    "oth_curve",
    "pr_curve",
    "rasterize",
    "separate_stains",
    "sweep_threshold",
    "union_area",
    "validate_patch",
]
