"""Domain vocabulary shared by all modules: slides, patches, classes,
instances and evaluation configuration.

All values are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidInputError
from .masks import BinaryMask

DEFAULT_PATCH_SIZE = 350

_SLIDE_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9.-]*$")


class StainKind(str, Enum):
    NUCLEAR = "nuclear"
    MEMBRANE = "membrane"


class Biomarker(str, Enum):
    KI67 = "Ki-67"
    ER = "ER"
    PR = "PR"
    HER2 = "HER2"

    @property
    def stain_kind(self) -> StainKind:
        return StainKind.MEMBRANE if self is Biomarker.HER2 else StainKind.NUCLEAR


class CellClass(str, Enum):
    """Tumor-cell category. Non-tumor cells (stroma, lymphocytes) have no
    class: they are never annotated, stored or counted."""

    IMMUNOPOSITIVE = "immunopositive"
    IMMUNONEGATIVE = "immunonegative"
    M0_NO_STAINING = "m0_no_staining"
    M1_FAINT_INCOMPLETE = "m1_faint_incomplete"
    M2_MODERATE_COMPLETE = "m2_moderate_complete"
    M3_INTENSE_COMPLETE = "m3_intense_complete"

    @property
    def stain_kind(self) -> StainKind:
        if self in (CellClass.IMMUNOPOSITIVE, CellClass.IMMUNONEGATIVE):
            return StainKind.NUCLEAR
        return StainKind.MEMBRANE


NUCLEAR_CLASSES = (CellClass.IMMUNOPOSITIVE, CellClass.IMMUNONEGATIVE)
MEMBRANE_CLASSES = (
    CellClass.M0_NO_STAINING,
    CellClass.M1_FAINT_INCOMPLETE,
    CellClass.M2_MODERATE_COMPLETE,
    CellClass.M3_INTENSE_COMPLETE,
)


def parse_cell_class(value: str) -> CellClass:
    try:
        return CellClass(value)
    except ValueError:
        raise InvalidInputError(f"unknown cell class {value!r}") from None


def check_single_family(classes) -> StainKind | None:
    """Verify all classes belong to one stain family; return that family.

    Returns None for an empty collection. Raises on mixed families.
    """
    kinds = {c.stain_kind for c in classes}
    if len(kinds) > 1:
        raise InvalidInputError("cell classes mix nuclear and membrane stain families")
    return kinds.pop() if kinds else None


@dataclass(frozen=True)
class SlideRecord:
    """Registered source image, full resolution (level 0) coordinates."""

    id: str
    width: int
    height: int
    resolution: float  # micrometers per pixel
    biomarker: Biomarker

    @property
    def stain_kind(self) -> StainKind:
        return self.biomarker.stain_kind

    def __post_init__(self):
        if not _SLIDE_ID_RE.match(self.id):
            raise InvalidInputError(
                f"slide id {self.id!r} must be alphanumeric plus '.' or '-'"
            )
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("slide dimensions must be positive")
        if self.resolution <= 0:
            raise InvalidInputError("resolution must be positive")


@dataclass(frozen=True)
class PatchRegion:
    """Axis-aligned region of a slide, in full-resolution pixel coordinates."""

    slide_id: str
    x: int
    y: int
    width: int = DEFAULT_PATCH_SIZE
    height: int = DEFAULT_PATCH_SIZE

    def key(self) -> str:
        """Canonical string key; parseable back via `parse_patch_key`."""
        return f"{self.slide_id}_{self.x}_{self.y}_{self.width}_{self.height}"


def parse_patch_key(key: str) -> PatchRegion:
    parts = key.rsplit("_", 4)
    if len(parts) != 5:
        raise InvalidInputError(f"malformed patch key {key!r}")
    try:
        x, y, w, h = (int(p) for p in parts[1:])
    except ValueError:
        raise InvalidInputError(f"malformed patch key {key!r}") from None
    return PatchRegion(slide_id=parts[0], x=x, y=y, width=w, height=h)


def validate_patch(patch: PatchRegion, slide: SlideRecord) -> list[str]:
    """Collect every invariant violation; an empty list means ok.

    Violations are data, not faults: callers decide whether to raise.
    """
    violations = []
    if patch.slide_id != slide.id:
        violations.append(f"patch references slide {patch.slide_id!r}, not {slide.id!r}")
    if patch.width <= 0 or patch.height <= 0:
        violations.append("empty patch")
    if patch.x < 0 or patch.y < 0:
        violations.append("negative origin")
    if patch.width > 0 and patch.height > 0 and patch.x >= 0 and patch.y >= 0:
        if patch.x + patch.width > slide.width or patch.y + patch.height > slide.height:
            violations.append("exceeds bounds")
    return violations


@dataclass(frozen=True)
class PredictionInstance:
    """One segmented cell emitted by a predictor."""

    mask: BinaryMask
    cell_class: CellClass
    confidence: float
    id: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(
                f"confidence {self.confidence} outside [0, 1] for instance {self.id!r}"
            )
        if self.mask.area() == 0:
            raise InvalidInputError(f"instance {self.id!r} has an empty mask")


@dataclass(frozen=True)
class GroundTruthInstance:
    """One expert-annotated cell, rasterized to the patch grid."""

    mask: BinaryMask
    cell_class: CellClass
    id: str


def default_iou_thresholds() -> tuple[float, ...]:
    """The ten standard thresholds 0.50, 0.55, ..., 0.95.

    Built from integers so each value is the canonical double for its
    decimal literal (0.55 here compares equal to a 0.55 written in a
    config file).
    """
    return tuple(k / 100 for k in range(50, 100, 5))


@dataclass(frozen=True)
class EvaluationConfig:
    """Knobs for instance-segmentation evaluation.

    `tau` filters predictions by confidence before ranking; the default 0
    admits everything (average precision already integrates over
    confidence). Ties in confidence are broken by instance id ascending,
    making every downstream result order-independent.
    """

    iou_thresholds: tuple[float, ...] = field(default_factory=default_iou_thresholds)
    tau: float = 0.0

    def __post_init__(self):
        ths = tuple(self.iou_thresholds)
        object.__setattr__(self, "iou_thresholds", ths)
        if not ths:
            raise InvalidInputError("iou_thresholds must be non-empty")
        if any(not 0.0 < t <= 1.0 for t in ths):
            raise InvalidInputError("iou thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(ths, ths[1:])):
            raise InvalidInputError("iou thresholds must be strictly increasing")
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidInputError("tau must lie in [0, 1]")


def tie_break_key(instance: PredictionInstance) -> tuple[float, str]:
    """Deterministic ranking key: confidence descending, then id ascending."""
    return (-instance.confidence, instance.id)
