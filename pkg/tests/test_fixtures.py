import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from ihcq.baseline import BaselineNucleiSegmenter
from ihcq.core import CellClass
from ihcq.documents import AnnotationDocument, PredictionFile, gt_instances_from_document
from ihcq.evaluation import map_at
from ihcq.fixtures import generate_disks, generate_fig5, spurious_prediction_file
from ihcq.masks import iou, rasterize


def read_all_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir())}


def test_disks_deterministic_per_seed(tmp_path):
    generate_disks(tmp_path / "a", seed=7)
    generate_disks(tmp_path / "b", seed=7)
    assert read_all_bytes(tmp_path / "a") == read_all_bytes(tmp_path / "b")
    generate_disks(tmp_path / "c", seed=8)
    assert read_all_bytes(tmp_path / "a") != read_all_bytes(tmp_path / "c")


def test_disks_ground_truth_matches_image(tmp_path):
    manifest = generate_disks(tmp_path, seed=3)
    doc = AnnotationDocument.from_json(json.loads((tmp_path / "ground_truth.json").read_text()))
    assert len(doc.annotations) == 8
    counts = {c: 0 for c in (CellClass.IMMUNOPOSITIVE, CellClass.IMMUNONEGATIVE)}
    for a in doc.annotations:
        counts[a.cell_class] += 1
    assert counts[CellClass.IMMUNONEGATIVE] == 5
    assert counts[CellClass.IMMUNOPOSITIVE] == 3
    assert manifest["cells"]["immunopositive"] == 3


def test_baseline_recovers_disks_exactly(tmp_path):
    generate_disks(tmp_path, seed=11)
    image = np.asarray(Image.open(tmp_path / "patch.png").convert("RGB"))
    doc = AnnotationDocument.from_json(json.loads((tmp_path / "ground_truth.json").read_text()))
    gts = gt_instances_from_document(doc)
    preds = BaselineNucleiSegmenter().predict(image)
    assert len(preds) == len(gts) == 8
    value, _ = map_at(preds, gts, 0.5)
    assert value == 1.0
    # every ground truth is hit at IoU 1.0
    for g in gts:
        assert max(iou(p.mask, g.mask) for p in preds) == 1.0


def test_fig5_scene_reproduces_worked_labels(tmp_path):
    from ihcq.evaluation import TP, FP, match_instances

    generate_fig5(tmp_path)
    doc = AnnotationDocument.from_json(json.loads((tmp_path / "ground_truth.json").read_text()))
    pf = PredictionFile.from_json(json.loads((tmp_path / "predictions.json").read_text()))
    gts = gt_instances_from_document(doc)
    match = match_instances(list(pf.instances), gts, 0.5)
    assert {r.pred_id: r.label for r in match.records} == {
        "P2": TP,
        "P3": TP,
        "P4": FP,
        "P1": FP,
    }
    assert match.unmatched_gt_ids == ("C",)


def test_fig5_deterministic(tmp_path):
    generate_fig5(tmp_path / "a")
    generate_fig5(tmp_path / "b")
    assert read_all_bytes(tmp_path / "a") == read_all_bytes(tmp_path / "b")


def test_spurious_predictions_never_touch_cells(tmp_path):
    generate_disks(tmp_path, seed=5)
    doc = AnnotationDocument.from_json(json.loads((tmp_path / "ground_truth.json").read_text()))
    pf = spurious_prediction_file(doc, seed=5)
    true_preds = [p for p in pf.instances if p.id.startswith("t")]
    strays = [p for p in pf.instances if p.id.startswith("s")]
    assert len(true_preds) == 8 and len(strays) == 6
    gts = gt_instances_from_document(doc)
    for stray in strays:
        assert stray.confidence == 0.1
        for g in gts:
            assert iou(stray.mask, g.mask) == 0.0
