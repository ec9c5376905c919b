"""Annotation documents and prediction files: the two JSON wire formats
everything else communicates through.

An annotation document is the versioned set of expert polygon
annotations for one patch; a prediction file carries the run-length
masks a segmenter produced for one patch. Converters bridge the two:
prediction masks become editable polygon annotations (for the
correction workflow) and annotation polygons rasterize back to masks
(for evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .core import (
    CellClass,
    GroundTruthInstance,
    PatchRegion,
    PredictionInstance,
    check_single_family,
    parse_cell_class,
)
from .errors import InvalidDocumentError, InvalidInputError
from .masks import BinaryMask, Polygon, mask_to_polygon, rasterize


class Provenance(str, Enum):
    MANUAL = "manual"
    MODEL = "model"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class Annotation:
    """One annotated cell: polygon, class and provenance."""

    id: str
    cell_class: CellClass
    polygon: Polygon
    provenance: Provenance
    confidence: float | None = None
    author: str = ""
    timestamp: str | None = None

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "class": self.cell_class.value,
            "polygon": self.polygon.to_json(),
            "provenance": self.provenance.value,
            "author": self.author,
            "timestamp": self.timestamp,
        }
        if self.confidence is not None:
            out["confidence"] = self.confidence
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Annotation":
        try:
            return cls(
                id=str(data["id"]),
                cell_class=parse_cell_class(data["class"]),
                polygon=Polygon.from_json(data["polygon"]),
                provenance=Provenance(data["provenance"]),
                confidence=None if data.get("confidence") is None else float(data["confidence"]),
                author=str(data.get("author", "")),
                timestamp=data.get("timestamp"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDocumentError(f"malformed annotation: {exc}") from None


@dataclass(frozen=True)
class AnnotationDocument:
    """Versioned annotation set for one patch.

    ``version`` is the base version the client edited (0 for a fresh
    document); the store assigns the next version and ``saved_at`` on
    save.
    """

    patch: PatchRegion
    annotations: tuple[Annotation, ...] = ()
    version: int = 0
    saved_at: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        validate_document(self)

    def with_version(self, version: int, saved_at: str | None = None) -> "AnnotationDocument":
        return replace(self, version=version, saved_at=saved_at)

    def to_json(self) -> dict:
        return {
            "patch": patch_to_json(self.patch),
            "version": self.version,
            "saved_at": self.saved_at,
            "annotations": [a.to_json() for a in self.annotations],
        }

    @classmethod
    def from_json(cls, data: dict) -> "AnnotationDocument":
        if not isinstance(data, dict):
            raise InvalidDocumentError("annotation document must be a JSON object")
        try:
            patch = patch_from_json(data["patch"])
            version = int(data.get("version", 0))
            annotations = tuple(Annotation.from_json(a) for a in data.get("annotations", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDocumentError(f"malformed annotation document: {exc}") from None
        return cls(
            patch=patch,
            annotations=annotations,
            version=version,
            saved_at=data.get("saved_at"),
        )


def validate_document(doc: AnnotationDocument) -> None:
    if doc.version < 0:
        raise InvalidDocumentError("version must be non-negative")
    ids = [a.id for a in doc.annotations]
    if len(ids) != len(set(ids)):
        raise InvalidDocumentError("annotation ids must be unique within a document")
    try:
        check_single_family([a.cell_class for a in doc.annotations])
    except InvalidInputError as exc:
        raise InvalidDocumentError(str(exc)) from None
    for a in doc.annotations:
        if a.provenance is Provenance.MODEL and a.confidence is None:
            raise InvalidDocumentError(
                f"annotation {a.id!r} has model provenance but no confidence"
            )
        violations = a.polygon.bounds_violations(doc.patch.width, doc.patch.height)
        if violations:
            raise InvalidDocumentError(f"annotation {a.id!r}: {violations[0]}")


def patch_to_json(patch: PatchRegion) -> dict:
    return {
        "slide_id": patch.slide_id,
        "x": patch.x,
        "y": patch.y,
        "width": patch.width,
        "height": patch.height,
    }


def patch_from_json(data: dict) -> PatchRegion:
    try:
        return PatchRegion(
            slide_id=str(data["slide_id"]),
            x=int(data["x"]),
            y=int(data["y"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDocumentError(f"malformed patch: {exc}") from None


@dataclass(frozen=True)
class PredictionFile:
    """Segmenter output for one patch, as shipped on the wire."""

    patch: PatchRegion
    model: str
    instances: tuple[PredictionInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        ids = [i.id for i in self.instances]
        if len(ids) != len(set(ids)):
            raise InvalidDocumentError("instance ids must be unique within a file")
        check_single_family([i.cell_class for i in self.instances])
        for inst in self.instances:
            if (inst.mask.width, inst.mask.height) != (self.patch.width, self.patch.height):
                raise InvalidDocumentError(
                    f"instance {inst.id!r} mask does not match the patch frame"
                )

    def to_json(self) -> dict:
        return {
            "patch": patch_to_json(self.patch),
            "model": self.model,
            "instances": [
                {
                    "id": i.id,
                    "class": i.cell_class.value,
                    "confidence": i.confidence,
                    "mask": i.mask.to_json(),
                }
                for i in self.instances
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PredictionFile":
        if not isinstance(data, dict):
            raise InvalidDocumentError("prediction file must be a JSON object")
        try:
            patch = patch_from_json(data["patch"])
            model = str(data.get("model", ""))
            raw_instances = data.get("instances", [])
            instances = []
            for idx, item in enumerate(raw_instances):
                instances.append(
                    PredictionInstance(
                        mask=BinaryMask.from_json(item["mask"]),
                        cell_class=parse_cell_class(item["class"]),
                        confidence=float(item["confidence"]),
                        id=str(item.get("id", f"i{idx:06d}")),
                    )
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDocumentError(f"malformed prediction file: {exc}") from None
        return cls(patch=patch, model=model, instances=tuple(instances))


def gt_instances_from_document(doc: AnnotationDocument) -> list[GroundTruthInstance]:
    """Rasterize a document's polygons into evaluation-ready instances."""
    return [
        GroundTruthInstance(
            mask=rasterize(a.polygon, doc.patch.width, doc.patch.height),
            cell_class=a.cell_class,
            id=a.id,
        )
        for a in doc.annotations
    ]


def scoreable_instances(doc: AnnotationDocument, tau: float):
    """Annotations that pass the confidence filter.

    Manual and corrected annotations are expert truth and always count,
    even when a corrected entry still carries its model confidence; only
    model-provenance entries are filtered.
    """
    return [
        a
        for a in doc.annotations
        if a.provenance is not Provenance.MODEL or (a.confidence or 0.0) >= tau
    ]


def document_from_predictions(
    pred_file: PredictionFile, author: str = "presegmentation"
) -> AnnotationDocument:
    """Turn predictions into an editable model-provenance document.

    Masks become their outer boundary polygons; confidences are kept so
    the score panel can filter later. The result is not persisted: the
    reviewing pathologist saves it after correction.
    """
    annotations = [
        Annotation(
            id=f"m{idx:06d}",
            cell_class=inst.cell_class,
            polygon=mask_to_polygon(inst.mask),
            provenance=Provenance.MODEL,
            confidence=inst.confidence,
            author=author,
        )
        for idx, inst in enumerate(pred_file.instances)
    ]
    return AnnotationDocument(patch=pred_file.patch, annotations=tuple(annotations))
