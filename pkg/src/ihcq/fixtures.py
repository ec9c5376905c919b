"""Deterministic synthetic fixtures.

Two kinds:

* ``disks`` — a white patch with well-separated blue and brown disks plus
  the matching ground-truth document. Disk colors are derived from the
  stain basis vectors, so the classical baseline recovers every disk
  exactly; the fixture knows its own truth by construction.
* ``fig5`` — a small geometric scene with three ground truths and four
  predictions whose confidences and overlaps walk through every matching
  outcome (two solid hits, one under-threshold overlap, one stray).

Outputs are byte-identical for a fixed seed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .baseline import DAB_BASIS, HEMATOXYLIN_BASIS
from .core import CellClass, PatchRegion, PredictionInstance
from .documents import (
    Annotation,
    AnnotationDocument,
    PredictionFile,
    Provenance,
)
from .errors import InvalidInputError
from .masks import BinaryMask, Polygon, rasterize, trace_boundaries

DISK_PATCH_SIZE = 350
DISK_RADIUS = 8
FIG5_PATCH_SIZE = 100

_STAIN_STRENGTH = 1.2


def _stain_color(basis, strength=_STAIN_STRENGTH) -> tuple[int, int, int]:
    """RGB value whose optical density points along a stain basis."""
    unit = np.asarray(basis, dtype=float)
    unit = unit / np.linalg.norm(unit)
    values = np.round(256.0 * np.exp(-strength * unit) - 1.0)
    return tuple(int(v) for v in values)


HEMATOXYLIN_COLOR = _stain_color(HEMATOXYLIN_BASIS)
DAB_COLOR = _stain_color(DAB_BASIS)


def _disk_bitmap(size: int, cx: int, cy: int, radius: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2


def _place_centers(rng, count: int, size: int, radius: int, existing: list) -> list:
    """Rejection-sample well-separated disk centers."""
    margin = radius + 4
    min_gap = 2 * radius + 6
    centers = []
    attempts = 0
    while len(centers) < count:
        attempts += 1
        if attempts > 10_000:
            raise InvalidInputError("could not place disks; too many for the patch")
        cx = int(rng.integers(margin, size - margin))
        cy = int(rng.integers(margin, size - margin))
        if all(
            math.hypot(cx - ox, cy - oy) >= min_gap for ox, oy in existing + centers
        ):
            centers.append((cx, cy))
    return centers


def generate_disks(
    out_dir,
    seed: int,
    negatives: int = 5,
    positives: int = 3,
    radius: int = DISK_RADIUS,
    size: int = DISK_PATCH_SIZE,
) -> dict:
    """Write patch image + ground-truth document; return a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    blue_centers = _place_centers(rng, negatives, size, radius, [])
    brown_centers = _place_centers(rng, positives, size, radius, blue_centers)

    image = np.full((size, size, 3), 255, dtype=np.uint8)
    annotations = []
    idx = 0
    for centers, color, cell_class in (
        (blue_centers, HEMATOXYLIN_COLOR, CellClass.IMMUNONEGATIVE),
        (brown_centers, DAB_COLOR, CellClass.IMMUNOPOSITIVE),
    ):
        for cx, cy in centers:
            bitmap = _disk_bitmap(size, cx, cy, radius)
            image[bitmap] = color
            loops = trace_boundaries(BinaryMask.from_bitmap(bitmap))
            annotations.append(
                Annotation(
                    id=f"g{idx:06d}",
                    cell_class=cell_class,
                    polygon=loops[0],
                    provenance=Provenance.MANUAL,
                    author="fixture",
                )
            )
            idx += 1

    patch = PatchRegion(slide_id=f"fixture-disks-{seed}", x=0, y=0, width=size, height=size)
    doc = AnnotationDocument(patch=patch, annotations=tuple(annotations))

    image_path = out_dir / "patch.png"
    Image.fromarray(image).save(image_path, format="PNG")
    gt_path = out_dir / "ground_truth.json"
    gt_path.write_text(json.dumps(doc.to_json(), indent=2, sort_keys=True))

    manifest = {
        "kind": "disks",
        "seed": seed,
        "patch_key": patch.key(),
        "image": image_path.name,
        "ground_truth": gt_path.name,
        "cells": {
            CellClass.IMMUNONEGATIVE.value: negatives,
            CellClass.IMMUNOPOSITIVE.value: positives,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _rect_polygon(x0: int, y0: int, x1: int, y1: int) -> Polygon:
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def _rect_mask(size: int, x0: int, y0: int, x1: int, y1: int) -> BinaryMask:
    bitmap = np.zeros((size, size), dtype=bool)
    bitmap[y0:y1, x0:x1] = True
    return BinaryMask.from_bitmap(bitmap)


# The worked matching scene: ground truths A/B/C and predictions P1..P4.
# P2 and P3 overlap A and B above half IoU, P4 clips B's corner well below
# it, P1 touches nothing, C goes undetected.
_FIG5_GTS = {
    "A": (10, 10, 30, 30),
    "B": (50, 10, 70, 30),
    "C": (10, 60, 30, 80),
}
_FIG5_PREDS = {
    "P1": (0.55, (60, 60, 80, 80)),
    "P2": (0.90, (12, 10, 32, 30)),
    "P3": (0.70, (52, 10, 72, 30)),
    "P4": (0.60, (62, 22, 82, 42)),
}


def generate_fig5(out_dir, seed: int = 0) -> dict:
    """Write the matching-example scene: image, ground truth, predictions.

    The seed only names the output (the scene itself is fixed), keeping
    the command-line surface uniform with the disks kind.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = FIG5_PATCH_SIZE
    patch = PatchRegion(slide_id=f"fixture-fig5-{seed}", x=0, y=0, width=size, height=size)

    annotations = [
        Annotation(
            id=name,
            cell_class=CellClass.IMMUNOPOSITIVE,
            polygon=_rect_polygon(*box),
            provenance=Provenance.MANUAL,
            author="fixture",
        )
        for name, box in sorted(_FIG5_GTS.items())
    ]
    doc = AnnotationDocument(patch=patch, annotations=tuple(annotations))

    instances = [
        PredictionInstance(
            mask=_rect_mask(size, *box),
            cell_class=CellClass.IMMUNOPOSITIVE,
            confidence=confidence,
            id=name,
        )
        for name, (confidence, box) in sorted(_FIG5_PREDS.items())
    ]
    pred_file = PredictionFile(patch=patch, model="fig5-example", instances=tuple(instances))

    image = np.full((size, size, 3), 255, dtype=np.uint8)
    for box in _FIG5_GTS.values():
        x0, y0, x1, y1 = box
        image[y0:y1, x0:x1] = DAB_COLOR

    image_path = out_dir / "patch.png"
    Image.fromarray(image).save(image_path, format="PNG")
    gt_path = out_dir / "ground_truth.json"
    gt_path.write_text(json.dumps(doc.to_json(), indent=2, sort_keys=True))
    pred_path = out_dir / "predictions.json"
    pred_path.write_text(json.dumps(pred_file.to_json(), indent=2, sort_keys=True))

    manifest = {
        "kind": "fig5",
        "seed": seed,
        "patch_key": patch.key(),
        "image": image_path.name,
        "ground_truth": gt_path.name,
        "predictions": pred_path.name,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def spurious_prediction_file(
    doc: AnnotationDocument,
    seed: int,
    spurious_count: int = 6,
    true_confidence: float = 0.9,
    spurious_confidence: float = 0.1,
) -> PredictionFile:
    """Perfect predictions plus low-confidence stray blobs.

    Built from a disks-style ground-truth document; the strays never
    touch a real cell, so filtering them out strictly improves mAP and
    the sweep's best threshold lands above zero.
    """
    rng = np.random.default_rng(seed)
    w, h = doc.patch.width, doc.patch.height
    occupied = np.zeros((h, w), dtype=bool)
    instances = []
    for idx, ann in enumerate(doc.annotations):
        mask = rasterize(ann.polygon, w, h)
        occupied |= mask.to_bitmap()
        instances.append(
            PredictionInstance(
                mask=mask,
                cell_class=ann.cell_class,
                confidence=true_confidence,
                id=f"t{idx:06d}",
            )
        )
    side = 6
    placed = 0
    attempts = 0
    while placed < spurious_count:
        attempts += 1
        if attempts > 10_000:
            raise InvalidInputError("could not place spurious blobs")
        x = int(rng.integers(0, w - side))
        y = int(rng.integers(0, h - side))
        if occupied[y : y + side, x : x + side].any():
            continue
        bitmap = np.zeros((h, w), dtype=bool)
        bitmap[y : y + side, x : x + side] = True
        occupied |= bitmap
        cell_class = doc.annotations[placed % len(doc.annotations)].cell_class
        instances.append(
            PredictionInstance(
                mask=BinaryMask.from_bitmap(bitmap),
                cell_class=cell_class,
                confidence=spurious_confidence,
                id=f"s{placed:06d}",
            )
        )
        placed += 1
    return PredictionFile(patch=doc.patch, model="spurious-fixture", instances=tuple(instances))
