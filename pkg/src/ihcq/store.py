"""File-backed persistence: slide registry, multi-resolution tile
pyramids, append-only versioned annotation documents and prediction
files.

Layout under the store root (documented so backups are auditable):

    slides/{id}/meta.json
    slides/{id}/tiles/{level}/{tx}_{ty}.png|.jpg
    annotations/{patch-key}/v{n}.json
    predictions/{id}.json

Level-0 tiles are lossless PNG (annotation work happens at full
resolution); coarser levels are navigational and stored as JPEG.
Document saves are append-only with optimistic version checks: exactly
one of two concurrent saves from the same base version wins, the other
gets a conflict and nothing is lost.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from .core import Biomarker, PatchRegion, SlideRecord, parse_patch_key
from .documents import AnnotationDocument, PredictionFile
from .errors import (
    EmptyDatasetError,
    InvalidInputError,
    NotFoundError,
    VersionConflictError,
)

TILE_SIZE = 256
COARSE_JPEG_QUALITY = 90


@dataclass(frozen=True)
class TilePyramid:
    """Level dimensions, full resolution first, each level halving (ceil)
    both dimensions until max(w, h) fits one tile."""

    levels: tuple[tuple[int, int], ...]
    tile_size: int = TILE_SIZE

    @classmethod
    def for_dimensions(cls, width: int, height: int) -> "TilePyramid":
        if width <= 0 or height <= 0:
            raise InvalidInputError("pyramid dimensions must be positive")
        levels = [(width, height)]
        w, h = width, height
        while max(w, h) > TILE_SIZE:
            w, h = math.ceil(w / 2), math.ceil(h / 2)
            levels.append((w, h))
        return cls(levels=tuple(levels))

    @property
    def level_count(self) -> int:
        return len(self.levels)

    def grid(self, level: int) -> tuple[int, int]:
        """(tiles across, tiles down) at a level."""
        w, h = self._level_dims(level)
        return math.ceil(w / self.tile_size), math.ceil(h / self.tile_size)

    def tile_box(self, level: int, tx: int, ty: int) -> tuple[int, int, int, int]:
        """Pixel box (x0, y0, x1, y1) of a tile, cropped at level edges."""
        w, h = self._level_dims(level)
        nx, ny = self.grid(level)
        if not (0 <= tx < nx and 0 <= ty < ny):
            raise NotFoundError(f"tile ({level}, {tx}, {ty}) out of range")
        x0, y0 = tx * self.tile_size, ty * self.tile_size
        return x0, y0, min(x0 + self.tile_size, w), min(y0 + self.tile_size, h)

    def tile_count(self) -> int:
        return sum(nx * ny for nx, ny in (self.grid(lv) for lv in range(self.level_count)))

    def _level_dims(self, level: int) -> tuple[int, int]:
        if not 0 <= level < self.level_count:
            raise NotFoundError(f"level {level} out of range")
        return self.levels[level]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _create_exclusive(path: Path, data: bytes) -> bool:
    """Write a brand-new file atomically; False if it already exists."""
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_bytes(data)
    try:
        os.link(tmp, path)
        return True
    except FileExistsError:
        return False
    finally:
        tmp.unlink(missing_ok=True)


def _canonical_json(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode()


class SlideStore:
    """All persistent state lives under one root directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._doc_lock = threading.Lock()

    # -- slides and tiles ------------------------------------------------

    def _slide_dir(self, slide_id: str) -> Path:
        return self.root / "slides" / slide_id

    def ingest_image(
        self, image_path, slide_id: str, biomarker: Biomarker, resolution: float
    ) -> tuple[SlideRecord, TilePyramid]:
        """Register an image and build its tile pyramid.

        Idempotent: re-ingesting identical bytes under the same id is a
        no-op; different bytes under an existing id is a conflict.
        """
        image_path = Path(image_path)
        if not image_path.exists():
            raise NotFoundError(f"image {image_path} does not exist")
        source = image_path.read_bytes()
        digest = hashlib.sha256(source).hexdigest()

        meta_path = self._slide_dir(slide_id) / "meta.json"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            if meta["source_sha256"] != digest:
                raise VersionConflictError(
                    f"slide {slide_id!r} already ingested with different content"
                )
            return self._record_from_meta(meta), TilePyramid(
                levels=tuple(tuple(lv) for lv in meta["levels"])
            )

        try:
            with Image.open(io.BytesIO(source)) as img:
                image = img.convert("RGB")
        except Exception as exc:
            raise InvalidInputError(f"unreadable image {image_path}: {exc}") from None

        record = SlideRecord(
            id=slide_id,
            width=image.width,
            height=image.height,
            resolution=resolution,
            biomarker=biomarker,
        )
        pyramid = TilePyramid.for_dimensions(image.width, image.height)

        level_image = image
        for level in range(pyramid.level_count):
            if level > 0:
                w, h = pyramid.levels[level]
                level_image = level_image.resize((w, h), Image.BOX)
            self._write_level_tiles(slide_id, pyramid, level, level_image)

        meta = {
            "id": record.id,
            "width": record.width,
            "height": record.height,
            "resolution": record.resolution,
            "biomarker": record.biomarker.value,
            "levels": [list(lv) for lv in pyramid.levels],
            "tile_size": pyramid.tile_size,
            "source_sha256": digest,
            "ingested_at": _utc_now(),
        }
        _write_atomic(meta_path, json.dumps(meta, indent=2).encode())
        return record, pyramid

    def _write_level_tiles(self, slide_id, pyramid, level, level_image) -> None:
        level_dir = self._slide_dir(slide_id) / "tiles" / str(level)
        level_dir.mkdir(parents=True, exist_ok=True)
        nx, ny = pyramid.grid(level)
        for ty in range(ny):
            for tx in range(nx):
                box = pyramid.tile_box(level, tx, ty)
                tile = level_image.crop(box)
                buf = io.BytesIO()
                if level == 0:
                    tile.save(buf, format="PNG")
                    suffix = "png"
                else:
                    tile.save(buf, format="JPEG", quality=COARSE_JPEG_QUALITY)
                    suffix = "jpg"
                _write_atomic(level_dir / f"{tx}_{ty}.{suffix}", buf.getvalue())

    def _record_from_meta(self, meta: dict) -> SlideRecord:
        return SlideRecord(
            id=meta["id"],
            width=meta["width"],
            height=meta["height"],
            resolution=meta["resolution"],
            biomarker=Biomarker(meta["biomarker"]),
        )

    def get_slide(self, slide_id: str) -> SlideRecord:
        meta_path = self._slide_dir(slide_id) / "meta.json"
        if not meta_path.exists():
            raise NotFoundError(f"slide {slide_id!r} not found")
        return self._record_from_meta(json.loads(meta_path.read_text()))

    def get_pyramid(self, slide_id: str) -> TilePyramid:
        meta_path = self._slide_dir(slide_id) / "meta.json"
        if not meta_path.exists():
            raise NotFoundError(f"slide {slide_id!r} not found")
        meta = json.loads(meta_path.read_text())
        return TilePyramid(levels=tuple(tuple(lv) for lv in meta["levels"]))

    def list_slides(self) -> list[SlideRecord]:
        slides_dir = self.root / "slides"
        if not slides_dir.exists():
            return []
        records = []
        for meta_path in sorted(slides_dir.glob("*/meta.json")):
            records.append(self._record_from_meta(json.loads(meta_path.read_text())))
        return records

    def get_tile(self, slide_id: str, level: int, tx: int, ty: int) -> tuple[bytes, str]:
        """Tile bytes plus their media type."""
        pyramid = self.get_pyramid(slide_id)
        pyramid.tile_box(level, tx, ty)  # range check
        suffix, media = ("png", "image/png") if level == 0 else ("jpg", "image/jpeg")
        path = self._slide_dir(slide_id) / "tiles" / str(level) / f"{tx}_{ty}.{suffix}"
        if not path.exists():
            raise NotFoundError(f"tile ({level}, {tx}, {ty}) missing for {slide_id!r}")
        return path.read_bytes(), media

    def read_region(self, patch: PatchRegion) -> np.ndarray:
        """Full-resolution RGB pixels for a patch, stitched from tiles."""
        slide = self.get_slide(patch.slide_id)
        pyramid = self.get_pyramid(patch.slide_id)
        if (
            patch.x < 0
            or patch.y < 0
            or patch.width <= 0
            or patch.height <= 0
            or patch.x + patch.width > slide.width
            or patch.y + patch.height > slide.height
        ):
            raise InvalidInputError(f"patch {patch.key()} outside slide bounds")
        out = np.zeros((patch.height, patch.width, 3), dtype=np.uint8)
        t = pyramid.tile_size
        for ty in range(patch.y // t, (patch.y + patch.height - 1) // t + 1):
            for tx in range(patch.x // t, (patch.x + patch.width - 1) // t + 1):
                data, _ = self.get_tile(patch.slide_id, 0, tx, ty)
                tile = np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))
                x0, y0 = tx * t, ty * t
                sx0 = max(patch.x, x0)
                sy0 = max(patch.y, y0)
                sx1 = min(patch.x + patch.width, x0 + tile.shape[1])
                sy1 = min(patch.y + patch.height, y0 + tile.shape[0])
                out[sy0 - patch.y : sy1 - patch.y, sx0 - patch.x : sx1 - patch.x] = tile[
                    sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0
                ]
        return out

    # -- annotation documents --------------------------------------------

    def _doc_dir(self, patch_key: str) -> Path:
        parse_patch_key(patch_key)  # reject malformed keys before touching disk
        return self.root / "annotations" / patch_key

    def _latest_version(self, doc_dir: Path) -> int:
        if not doc_dir.exists():
            return 0
        versions = [
            int(p.stem[1:]) for p in doc_dir.glob("v*.json") if p.stem[1:].isdigit()
        ]
        return max(versions, default=0)

    def save_document(self, doc: AnnotationDocument) -> int:
        """Append the next version; the document's own version is the base
        the client edited and must match the latest stored one."""
        doc_dir = self._doc_dir(doc.patch.key())
        with self._doc_lock:
            doc_dir.mkdir(parents=True, exist_ok=True)
            latest = self._latest_version(doc_dir)
            if doc.version != latest:
                raise VersionConflictError(
                    f"document for {doc.patch.key()} is at version {latest}, "
                    f"save was based on {doc.version}"
                )
            new_version = latest + 1
            stored = doc.with_version(new_version, saved_at=_utc_now())
            payload = json.dumps(stored.to_json(), indent=2, sort_keys=True).encode()
            if not _create_exclusive(doc_dir / f"v{new_version}.json", payload):
                raise VersionConflictError(
                    f"concurrent save of {doc.patch.key()} version {new_version}"
                )
        return new_version

    def load_document(self, patch_key: str, version: int | None = None) -> AnnotationDocument:
        doc_dir = self._doc_dir(patch_key)
        if version is None:
            version = self._latest_version(doc_dir)
        if version <= 0:
            raise NotFoundError(f"no annotations stored for {patch_key}")
        path = doc_dir / f"v{version}.json"
        if not path.exists():
            raise NotFoundError(f"version {version} not stored for {patch_key}")
        return AnnotationDocument.from_json(json.loads(path.read_text()))

    def has_document(self, patch_key: str) -> bool:
        return self._latest_version(self._doc_dir(patch_key)) > 0

    def list_document_keys(self) -> list[str]:
        ann_dir = self.root / "annotations"
        if not ann_dir.exists():
            return []
        return sorted(p.name for p in ann_dir.iterdir() if p.is_dir())

    # -- prediction files --------------------------------------------------

    def save_prediction_file(self, pred_file: PredictionFile) -> str:
        """Content-addressed save; returns the file id."""
        payload = _canonical_json(pred_file.to_json())
        file_id = hashlib.sha256(payload).hexdigest()[:16]
        pred_dir = self.root / "predictions"
        pred_dir.mkdir(parents=True, exist_ok=True)
        _write_atomic(pred_dir / f"{file_id}.json", payload)
        return file_id

    def load_prediction_file(self, file_id: str) -> PredictionFile:
        path = self.root / "predictions" / f"{file_id}.json"
        if not path.exists():
            raise NotFoundError(f"prediction file {file_id!r} not found")
        return PredictionFile.from_json(json.loads(path.read_text()))

    # -- dataset export ----------------------------------------------------

    def export_dataset(self, split_spec: dict[str, list[str]]) -> dict:
        """Manifest of per-class instance counts for each named split.

        Rows mirror the dataset-breakdown table: one row per class with a
        column per split plus a total, and an "all" summary row.
        """
        if not split_spec:
            raise EmptyDatasetError("split specification is empty")
        splits = {}
        class_names: set[str] = set()
        for split_name, keys in split_spec.items():
            if not keys:
                raise EmptyDatasetError(f"split {split_name!r} contains no patches")
            per_class: dict[str, int] = {}
            for key in keys:
                doc = self.load_document(key)
                for ann in doc.annotations:
                    per_class[ann.cell_class.value] = per_class.get(ann.cell_class.value, 0) + 1
            class_names.update(per_class)
            splits[split_name] = {
                "patches": list(keys),
                "per_class": per_class,
                "total": sum(per_class.values()),
            }
        split_names = list(split_spec)
        rows = [
            {
                "class": name,
                **{s: splits[s]["per_class"].get(name, 0) for s in split_names},
                "total": sum(splits[s]["per_class"].get(name, 0) for s in split_names),
            }
            for name in sorted(class_names)
        ]
        all_row = {
            "class": "all",
            **{s: splits[s]["total"] for s in split_names},
            "total": sum(splits[s]["total"] for s in split_names),
        }
        return {"splits": splits, "rows": rows, "all": all_row}
