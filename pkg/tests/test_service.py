import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from conftest import rect_mask
from ihcq.core import Biomarker, CellClass, PatchRegion, PredictionInstance
from ihcq.documents import Annotation, AnnotationDocument, PredictionFile, Provenance
from ihcq.fixtures import generate_disks
from ihcq.masks import Polygon
from ihcq.service import create_app
from ihcq.store import SlideStore


@pytest.fixture
def root(tmp_path):
    return tmp_path / "store"


@pytest.fixture
def client(root):
    return TestClient(create_app(root))


@pytest.fixture
def disks(tmp_path, root):
    """Disks fixture ingested as a slide; returns its patch key."""
    fixture_dir = tmp_path / "fixture"
    manifest = generate_disks(fixture_dir, seed=7)
    store = SlideStore(root)
    slide_id = f"fixture-disks-7"
    store.ingest_image(fixture_dir / "patch.png", slide_id, Biomarker.KI67, 0.25)
    doc = AnnotationDocument.from_json(
        json.loads((fixture_dir / "ground_truth.json").read_text())
    )
    return manifest["patch_key"], doc


def annotation(ann_id, cls=CellClass.IMMUNOPOSITIVE, provenance=Provenance.MANUAL,
               confidence=None):
    return Annotation(
        id=ann_id,
        cell_class=cls,
        polygon=Polygon(((1, 1), (8, 1), (8, 8), (1, 8))),
        provenance=provenance,
        confidence=confidence,
        author="dr-a",
    )


def nuclear_doc(version=0, pos=3, neg=7):
    patch = PatchRegion("s1", 0, 0, 50, 50)
    annotations = []
    for i in range(pos + neg):
        cls = CellClass.IMMUNOPOSITIVE if i < pos else CellClass.IMMUNONEGATIVE
        x = 1 + (i % 5) * 9
        y = 1 + (i // 5) * 9
        annotations.append(
            Annotation(
                id=f"a{i}",
                cell_class=cls,
                polygon=Polygon(((x, y), (x + 6, y), (x + 6, y + 6), (x, y + 6))),
                provenance=Provenance.MANUAL,
                author="dr-a",
            )
        )
    return AnnotationDocument(patch=patch, annotations=tuple(annotations), version=version)


# -- slides and tiles --------------------------------------------------------------


def test_slides_listing_roundtrip(client, root, tmp_path):
    store = SlideStore(root)
    for idx in range(2):
        pixels = np.random.default_rng(idx).integers(0, 256, size=(300, 400, 3)).astype(np.uint8)
        path = tmp_path / f"img{idx}.png"
        Image.fromarray(pixels).save(path)
        store.ingest_image(path, f"s{idx}", Biomarker.ER, 0.25)
    listing = client.get("/api/slides").json()
    assert [s["id"] for s in listing] == ["s0", "s1"]
    one = client.get("/api/slides/s0").json()
    assert one["width"] == 400 and one["height"] == 300
    assert one["biomarker"] == "ER" and one["stain_kind"] == "nuclear"


def test_unknown_slide_404(client):
    resp = client.get("/api/slides/ghost")
    assert resp.status_code == 404
    assert resp.json()["error"]["code"] == "not_found"


def test_tile_bytes_and_caching(client, root, disks):
    key, _ = disks
    store = SlideStore(root)
    expected, _ = store.get_tile("fixture-disks-7", 0, 0, 0)
    resp = client.get("/api/slides/fixture-disks-7/tiles/0/0_0")
    assert resp.status_code == 200
    assert resp.content == expected
    assert resp.headers["cache-control"] == "public, max-age=31536000, immutable"
    assert client.get("/api/slides/fixture-disks-7/tiles/0/0_0").content == resp.content


def test_tile_out_of_range_404(client, disks):
    assert client.get("/api/slides/fixture-disks-7/tiles/9/0_0").status_code == 404
    assert client.get("/api/slides/fixture-disks-7/tiles/0/xx").status_code == 404


# -- annotations --------------------------------------------------------------------


def test_put_then_get_annotations(client):
    doc = nuclear_doc()
    key = doc.patch.key()
    resp = client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    assert resp.status_code == 200
    assert resp.json() == {"version": 1}
    loaded = client.get(f"/api/patches/{key}/annotations").json()
    assert loaded["version"] == 1
    assert len(loaded["annotations"]) == 10


def test_stale_put_conflicts(client):
    doc = nuclear_doc()
    key = doc.patch.key()
    client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    client.put(f"/api/patches/{key}/annotations", json=nuclear_doc(version=1).to_json())
    resp = client.put(f"/api/patches/{key}/annotations", json=nuclear_doc(version=1).to_json())
    assert resp.status_code == 409
    assert resp.json()["error"]["code"] == "conflict"
    # older version still loadable
    v1 = client.get(f"/api/patches/{key}/annotations", params={"version": 1})
    assert v1.status_code == 200


def test_malformed_document_422(client):
    doc = nuclear_doc().to_json()
    doc["annotations"][0]["polygon"] = [[1, 1]]  # two vertices short
    key = "s1_0_0_50_50"
    resp = client.put(f"/api/patches/{key}/annotations", json=doc)
    assert resp.status_code == 422
    assert resp.json()["error"]["code"] == "invalid_input"


def test_key_mismatch_rejected(client):
    doc = nuclear_doc()
    resp = client.put("/api/patches/s1_0_0_60_60/annotations", json=doc.to_json())
    assert resp.status_code == 422


def test_get_missing_annotations_404(client):
    assert client.get("/api/patches/s1_0_0_50_50/annotations").status_code == 404


# -- presegmentation -----------------------------------------------------------------


def test_presegment_baseline_on_disks(client, disks):
    key, _ = disks
    resp = client.post(f"/api/patches/{key}/presegment", json={})
    assert resp.status_code == 200
    doc = resp.json()
    assert len(doc["annotations"]) == 8
    assert all(a["provenance"] == "model" for a in doc["annotations"])
    assert all("confidence" in a for a in doc["annotations"])
    # not auto-saved: the client saves after correction
    assert client.get(f"/api/patches/{key}/annotations").status_code == 404


def test_presegment_blank_patch(client, root, tmp_path):
    blank = np.full((128, 128, 3), 255, dtype=np.uint8)
    path = tmp_path / "blank.png"
    Image.fromarray(blank).save(path)
    SlideStore(root).ingest_image(path, "blank", Biomarker.KI67, 0.25)
    key = PatchRegion("blank", 0, 0, 128, 128).key()
    doc = client.post(f"/api/patches/{key}/presegment", json={}).json()
    assert doc["annotations"] == []


def test_presegment_from_uploaded_prediction_file(client):
    patch = PatchRegion("up", 0, 0, 30, 30)
    pf = PredictionFile(
        patch=patch,
        model="external",
        instances=tuple(
            PredictionInstance(
                mask=rect_mask(30, 30, 1 + 10 * i, 1, 8 + 10 * i, 8),
                cell_class=CellClass.IMMUNOPOSITIVE,
                confidence=0.7,
                id=f"p{i}",
            )
            for i in range(2)
        ),
    )
    upload = client.post("/api/predictions", json=pf.to_json())
    assert upload.status_code == 200
    file_id = upload.json()["id"]
    assert client.get(f"/api/predictions/{file_id}").json() == pf.to_json()
    resp = client.post(
        f"/api/patches/{patch.key()}/presegment", json={"prediction_file": file_id}
    )
    assert resp.status_code == 200
    assert len(resp.json()["annotations"]) == 2  # one annotation per instance


def test_presegment_missing_prediction_file_404(client):
    resp = client.post(
        "/api/patches/up_0_0_30_30/presegment", json={"prediction_file": "nope"}
    )
    assert resp.status_code == 404


# -- scoring ---------------------------------------------------------------------------


def test_score_nuclear_patch(client):
    doc = nuclear_doc()
    key = doc.patch.key()
    client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    resp = client.post(f"/api/patches/{key}/score")
    assert resp.status_code == 200
    body = resp.json()
    assert body["percent_positive"] == 30.0
    assert body["tau"] == 0.0


def test_score_empty_patch_422(client):
    patch = PatchRegion("s1", 0, 0, 50, 50)
    doc = AnnotationDocument(patch=patch)
    key = patch.key()
    client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    resp = client.post(f"/api/patches/{key}/score")
    assert resp.status_code == 422
    assert resp.json()["error"]["code"] == "empty_dataset"


def test_score_her2_patch(client):
    patch = PatchRegion("h1", 0, 0, 350, 350)
    annotations = []
    idx = 0
    for cls, count in (
        (CellClass.M3_INTENSE_COMPLETE, 12),
        (CellClass.M2_MODERATE_COMPLETE, 5),
        (CellClass.M1_FAINT_INCOMPLETE, 3),
        (CellClass.M0_NO_STAINING, 80),
    ):
        for _ in range(count):
            x = 1 + (idx % 30) * 11
            y = 1 + (idx // 30) * 11
            annotations.append(
                Annotation(
                    id=f"a{idx}",
                    cell_class=cls,
                    polygon=Polygon(((x, y), (x + 8, y), (x + 8, y + 8), (x, y + 8))),
                    provenance=Provenance.MANUAL,
                )
            )
            idx += 1
    doc = AnnotationDocument(patch=patch, annotations=tuple(annotations))
    key = patch.key()
    client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    body = client.post(f"/api/patches/{key}/score").json()
    assert body["score"] == "3+"
    assert body["assessment"] == "Positive"


def test_score_uploaded_prediction_file(client):
    patch = PatchRegion("p1", 0, 0, 30, 30)
    pf = PredictionFile(
        patch=patch,
        model="solov2-style",
        instances=tuple(
            PredictionInstance(
                mask=rect_mask(30, 30, 1 + 10 * i, 1, 8 + 10 * i, 8),
                cell_class=CellClass.IMMUNOPOSITIVE if i == 0 else CellClass.IMMUNONEGATIVE,
                confidence=0.2 + 0.3 * i,
                id=f"p{i}",
            )
            for i in range(3)
        ),
    )
    file_id = client.post("/api/predictions", json=pf.to_json()).json()["id"]
    body = client.post(
        f"/api/patches/{patch.key()}/score",
        params={"tau": 0.0, "prediction_file": file_id},
    ).json()
    assert body["total"] == 3
    assert body["source"] == "solov2-style"
    filtered = client.post(
        f"/api/patches/{patch.key()}/score",
        params={"tau": 0.4, "prediction_file": file_id},
    ).json()
    assert filtered["total"] == 2


def test_score_tau_filters_model_annotations(client):
    patch = PatchRegion("s2", 0, 0, 50, 50)
    annotations = (
        annotation("m1", CellClass.IMMUNOPOSITIVE, Provenance.MODEL, 0.2),
        Annotation(
            id="m2",
            cell_class=CellClass.IMMUNONEGATIVE,
            polygon=Polygon(((20, 20), (28, 20), (28, 28), (20, 28))),
            provenance=Provenance.MODEL,
            confidence=0.9,
        ),
    )
    doc = AnnotationDocument(patch=patch, annotations=annotations)
    key = patch.key()
    client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    at_zero = client.post(f"/api/patches/{key}/score", params={"tau": 0.0}).json()
    assert at_zero["total"] == 2
    at_half = client.post(f"/api/patches/{key}/score", params={"tau": 0.5}).json()
    assert at_half["total"] == 1
    assert at_half["percent_positive"] == 0.0


# -- evaluation --------------------------------------------------------------------------


def _upload_fig5(client, tmp_path):
    from ihcq.fixtures import generate_fig5

    generate_fig5(tmp_path / "fig5")
    doc = AnnotationDocument.from_json(
        json.loads((tmp_path / "fig5" / "ground_truth.json").read_text())
    )
    pf_json = json.loads((tmp_path / "fig5" / "predictions.json").read_text())
    key = doc.patch.key()
    assert client.put(f"/api/patches/{key}/annotations", json=doc.to_json()).status_code == 200
    file_id = client.post("/api/predictions", json=pf_json).json()["id"]
    return key, file_id


def test_evaluate_fig5_endpoint(client, tmp_path):
    key, file_id = _upload_fig5(client, tmp_path)
    resp = client.post(
        "/api/evaluate",
        json={"predictions": file_id, "ground_truth": [key]},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["map"]["at_050"] == pytest.approx(2 / 3, abs=1e-12)
    curves = body["classes"][0]["pr_curves"]
    assert set(curves) == {"0.50", "0.75", "oth"}


def test_evaluate_perfect_predictions(client):
    doc = nuclear_doc()
    key = doc.patch.key()
    client.put(f"/api/patches/{key}/annotations", json=doc.to_json())
    from ihcq.documents import gt_instances_from_document

    gts = gt_instances_from_document(doc)
    pf = PredictionFile(
        patch=doc.patch,
        model="perfect",
        instances=tuple(
            PredictionInstance(mask=g.mask, cell_class=g.cell_class, confidence=1.0, id=g.id)
            for g in gts
        ),
    )
    file_id = client.post("/api/predictions", json=pf.to_json()).json()["id"]
    body = client.post(
        "/api/evaluate", json={"predictions": [file_id], "ground_truth": [key]}
    ).json()
    assert body["map"]["at_050"] == 1.0
    assert body["map"]["range"] == 1.0


def test_evaluate_missing_reference_404(client, tmp_path):
    key, file_id = _upload_fig5(client, tmp_path)
    assert (
        client.post(
            "/api/evaluate", json={"predictions": "missing", "ground_truth": [key]}
        ).status_code
        == 404
    )
    assert (
        client.post(
            "/api/evaluate",
            json={"predictions": file_id, "ground_truth": ["ghost_0_0_10_10"]},
        ).status_code
        == 404
    )


def test_evaluate_comparison_rows(client, tmp_path):
    key, file_id = _upload_fig5(client, tmp_path)
    body = client.post(
        "/api/evaluate",
        json={"predictions": [file_id, file_id], "ground_truth": [key]},
    ).json()
    assert len(body["reports"]) == 2
    assert len(body["comparison"]) == 2
    assert body["comparison"][0]["map_050"] == pytest.approx(2 / 3, abs=1e-12)


def test_service_restart_reproduces_responses(root, client, disks):
    key, _ = disks
    first = client.get("/api/slides/fixture-disks-7").json()
    tile_first = client.get("/api/slides/fixture-disks-7/tiles/0/0_0").content
    fresh = TestClient(create_app(root))
    assert fresh.get("/api/slides/fixture-disks-7").json() == first
    assert fresh.get("/api/slides/fixture-disks-7/tiles/0/0_0").content == tile_first
