"""HTTP facade over the store, baseline, scoring and evaluation modules.

Handlers are stateless: every request reads through the store, so a
restarted service answers identically. Writes inherit the store's
single-writer-per-document guarantee. All bodies are JSON except tile
bytes.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .baseline import BaselineNucleiSegmenter
from .core import EvaluationConfig, StainKind, parse_patch_key
from .documents import (
    AnnotationDocument,
    PredictionFile,
    document_from_predictions,
    gt_instances_from_document,
    scoreable_instances,
)
from .errors import (
    EmptyDatasetError,
    IhcqError,
    InvalidInputError,
    NoCellsError,
    NotFoundError,
)
from .evaluation import comparison_rows, evaluate_samples
from .scoring import her2_quantify, nuclear_quantify
from .store import SlideStore

_STATUS_BY_CODE = {
    "not_found": 404,
    "conflict": 409,
    "invalid_input": 422,
    "empty_dataset": 422,
}


def _error_response(exc: IhcqError) -> JSONResponse:
    status = _STATUS_BY_CODE[exc.code]
    return JSONResponse(
        status_code=status,
        content={"error": {"status": status, "code": exc.code, "message": str(exc)}},
    )


def _slide_json(record) -> dict:
    return {
        "id": record.id,
        "width": record.width,
        "height": record.height,
        "resolution": record.resolution,
        "biomarker": record.biomarker.value,
        "stain_kind": record.stain_kind.value,
    }


async def _json_body(request: Request) -> dict:
    try:
        data = json.loads(await request.body() or b"{}")
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"request body is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInputError("request body must be a JSON object")
    return data


def create_app(store_root) -> FastAPI:
    store = SlideStore(store_root)
    app = FastAPI(title="ihcq", docs_url=None, redoc_url=None)

    @app.exception_handler(IhcqError)
    async def handle_domain_error(request: Request, exc: IhcqError):
        return _error_response(exc)

    @app.get("/api/slides")
    def list_slides():
        return [_slide_json(r) for r in store.list_slides()]

    @app.get("/api/slides/{slide_id}")
    def get_slide(slide_id: str):
        return _slide_json(store.get_slide(slide_id))

    @app.get("/api/slides/{slide_id}/pyramid")
    def get_pyramid(slide_id: str):
        pyramid = store.get_pyramid(slide_id)
        return {
            "levels": [list(lv) for lv in pyramid.levels],
            "tile_size": pyramid.tile_size,
        }

    @app.get("/api/slides/{slide_id}/tiles/{level}/{tile}")
    def get_tile(slide_id: str, level: int, tile: str):
        try:
            tx, ty = (int(p) for p in tile.split("_"))
        except ValueError:
            raise NotFoundError(f"malformed tile coordinate {tile!r}") from None
        data, media = store.get_tile(slide_id, level, tx, ty)
        return Response(
            content=data,
            media_type=media,
            headers={"Cache-Control": "public, max-age=31536000, immutable"},
        )

    @app.get("/api/patches/{key}/annotations")
    def get_annotations(key: str, version: int | None = None):
        return store.load_document(key, version).to_json()

    @app.put("/api/patches/{key}/annotations")
    async def put_annotations(key: str, request: Request):
        doc = AnnotationDocument.from_json(await _json_body(request))
        if doc.patch.key() != key:
            raise InvalidInputError(
                f"document patch {doc.patch.key()} does not match URL key {key}"
            )
        new_version = store.save_document(doc)
        return {"version": new_version}

    @app.post("/api/patches/{key}/presegment")
    async def presegment(key: str, request: Request):
        body = await _json_body(request)
        patch = parse_patch_key(key)
        file_id = body.get("prediction_file")
        if file_id is not None:
            pred_file = store.load_prediction_file(str(file_id))
            if pred_file.patch.key() != key:
                raise InvalidInputError(
                    f"prediction file targets {pred_file.patch.key()}, not {key}"
                )
        else:
            pixels = store.read_region(patch)
            instances = BaselineNucleiSegmenter().predict(pixels)
            pred_file = PredictionFile(patch=patch, model="baseline", instances=tuple(instances))
        return document_from_predictions(pred_file).to_json()

    @app.post("/api/patches/{key}/score")
    def score(key: str, tau: float = 0.0, prediction_file: str | None = None):
        if prediction_file is not None:
            pred = store.load_prediction_file(prediction_file)
            if pred.patch.key() != key:
                raise InvalidInputError(
                    f"prediction file targets {pred.patch.key()}, not {key}"
                )
            kept = [i for i in pred.instances if i.confidence >= tau]
            source = pred.model or "predictions"
            slide_id = pred.patch.slide_id
        else:
            doc = store.load_document(key)
            kept = scoreable_instances(doc, tau)
            source = "annotations"
            slide_id = doc.patch.slide_id
        if not kept:
            raise NoCellsError(f"no cells pass the confidence filter for {key}")
        try:
            slide_kind = store.get_slide(slide_id).stain_kind
        except NotFoundError:
            slide_kind = kept[0].cell_class.stain_kind
        if slide_kind is StainKind.MEMBRANE:
            result = her2_quantify(kept).to_json()
        else:
            result = nuclear_quantify(kept).to_json()
        result["tau"] = tau
        result["patch"] = key
        result["source"] = source
        return result

    @app.post("/api/predictions")
    async def upload_predictions(request: Request):
        pred_file = PredictionFile.from_json(await _json_body(request))
        return {"id": store.save_prediction_file(pred_file)}

    @app.get("/api/predictions/{file_id}")
    def get_predictions(file_id: str):
        return store.load_prediction_file(file_id).to_json()

    @app.post("/api/evaluate")
    async def evaluate_endpoint(request: Request):
        body = await _json_body(request)
        file_ids = body.get("predictions")
        if not file_ids:
            raise InvalidInputError("body must name at least one prediction file id")
        if isinstance(file_ids, str):
            file_ids = [file_ids]
        gt_refs = body.get("ground_truth")
        if not gt_refs:
            raise InvalidInputError("body must reference ground-truth annotations")

        gt_docs = []
        for ref in gt_refs:
            if isinstance(ref, str):
                gt_docs.append(store.load_document(ref))
            else:
                gt_docs.append(store.load_document(ref["patch"], ref.get("version")))
        if not gt_docs:
            raise EmptyDatasetError("no ground-truth documents resolved")

        raw_config = body.get("config") or {}
        config = EvaluationConfig(
            iou_thresholds=tuple(raw_config.get("iou_thresholds") or EvaluationConfig().iou_thresholds),
            tau=float(raw_config.get("tau", 0.0)),
        )

        gts_by_key = {doc.patch.key(): gt_instances_from_document(doc) for doc in gt_docs}
        reports = []
        for file_id in file_ids:
            pred_file = store.load_prediction_file(str(file_id))
            samples = []
            pred_key = pred_file.patch.key()
            for key, gts in gts_by_key.items():
                preds = list(pred_file.instances) if key == pred_key else []
                samples.append((preds, gts))
            if pred_key not in gts_by_key:
                samples.append((list(pred_file.instances), []))
            reports.append(
                evaluate_samples(samples, config=config, model=pred_file.model or str(file_id))
            )

        payload = reports[0].to_json()
        if len(reports) > 1:
            payload = {"reports": [r.to_json() for r in reports], "comparison": comparison_rows(reports)}
        return payload

    return app
