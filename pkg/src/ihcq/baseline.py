"""Deterministic classical segmenter: stain separation, per-stain
thresholding and connected components.

It exists so the whole pipeline (prediction files, evaluation, scoring,
presegmentation) can run end-to-end without any neural model; it makes
no attempt to compete with learned segmenters. Membrane staining
patterns are out of its reach, so it emits nuclear classes only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .core import CellClass, PredictionInstance
from .errors import InvalidInputError
from .masks import BinaryMask

# Unit optical-density directions for the blue counterstain and the brown
# chromogen, from the standard color-deconvolution constants. Fixed on
# purpose: no adaptive stain estimation here.
HEMATOXYLIN_BASIS = (0.650, 0.704, 0.286)
DAB_BASIS = (0.269, 0.568, 0.776)

# Largest possible optical density for 8-bit input: -log(1/256).
OD_MAX = math.log(256.0)

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class StainMaps:
    """Per-pixel optical density of each stain, same shape as the patch."""

    hematoxylin_od: np.ndarray
    dab_od: np.ndarray


def _unit(vec) -> np.ndarray:
    arr = np.asarray(vec, dtype=float)
    return arr / np.linalg.norm(arr)


def check_rgb_patch(image) -> np.ndarray:
    """Validate and coerce an 8-bit RGB patch to (h, w, 3) uint8."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected an RGB image (h, w, 3), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
            raise InvalidInputError("RGB patch must hold 8-bit values")
        arr = arr.astype(np.uint8)
    return arr


def separate_stains(rgb_patch, hematoxylin_basis=HEMATOXYLIN_BASIS, dab_basis=DAB_BASIS) -> StainMaps:
    """Project per-pixel optical density onto the two stain directions.

    Optical density per channel is -log((v + 1) / 256), zero for pure
    white, so both maps are non-negative everywhere.
    """
    arr = check_rgb_patch(rgb_patch)
    od = -np.log((arr.astype(np.float64) + 1.0) / 256.0)
    return StainMaps(
        hematoxylin_od=od @ _unit(hematoxylin_basis),
        dab_od=od @ _unit(dab_basis),
    )


class BaselineNucleiSegmenter(BaseEstimator):
    """Threshold-and-label segmenter over separated stains.

    Parameters follow the scikit-learn convention (stored verbatim,
    validated at predict time, introspectable via ``get_params``). The
    output is deterministic: instances are ordered by their top-left
    pixel and identically parameterized runs are bit-identical.

    Known limitation: touching same-color nuclei merge into a single
    component; no watershed splitting is attempted.
    """

    def __init__(
        self,
        od_threshold_hematoxylin: float = 0.15,
        od_threshold_dab: float = 0.15,
        min_area: int = 40,
        max_area: int = 5000,
        hematoxylin_basis: tuple[float, float, float] = HEMATOXYLIN_BASIS,
        dab_basis: tuple[float, float, float] = DAB_BASIS,
    ):
        self.od_threshold_hematoxylin = od_threshold_hematoxylin
        self.od_threshold_dab = od_threshold_dab
        self.min_area = min_area
        self.max_area = max_area
        self.hematoxylin_basis = hematoxylin_basis
        self.dab_basis = dab_basis

    @classmethod
    def from_config_file(cls, path) -> "BaselineNucleiSegmenter":
        with open(path, encoding="utf-8") as fh:
            params = json.load(fh)
        known = cls().get_params()
        unknown = set(params) - set(known)
        if unknown:
            raise InvalidInputError(f"unknown baseline parameters: {sorted(unknown)}")
        for key in ("hematoxylin_basis", "dab_basis"):
            if key in params:
                params[key] = tuple(params[key])
        return cls(**params)

    def _validate_params(self):
        if self.od_threshold_hematoxylin <= 0 or self.od_threshold_dab <= 0:
            raise InvalidInputError("optical-density thresholds must be positive")
        if not 0 < self.min_area < self.max_area:
            raise InvalidInputError("need 0 < min_area < max_area")

    def fit(self, X=None, y=None):
        """No-op; present for pipeline compatibility."""
        self._validate_params()
        return self

    def predict(self, rgb_patch) -> list[PredictionInstance]:
        """Segment one patch into nuclear-class instances.

        Pixels are assigned to their dominant stain, thresholded, and
        grouped with 4-connectivity; components outside the area band are
        dropped. Confidence is the component's mean optical density
        normalized by the 8-bit maximum. Output masks are pairwise
        disjoint by construction.
        """
        self._validate_params()
        stains = separate_stains(rgb_patch, self.hematoxylin_basis, self.dab_basis)
        hema, dab = stains.hematoxylin_od, stains.dab_od
        candidates = {
            CellClass.IMMUNONEGATIVE: (hema >= self.od_threshold_hematoxylin) & (hema >= dab),
            CellClass.IMMUNOPOSITIVE: (dab >= self.od_threshold_dab) & (dab > hema),
        }
        od_for = {CellClass.IMMUNONEGATIVE: hema, CellClass.IMMUNOPOSITIVE: dab}

        found = []
        for cell_class, mask in candidates.items():
            labels, count = ndimage.label(mask, structure=_FOUR_CONNECTED)
            for idx in range(1, count + 1):
                component = labels == idx
                area = int(component.sum())
                if not self.min_area <= area <= self.max_area:
                    continue
                first_pixel = int(np.flatnonzero(component.ravel())[0])
                confidence = float(np.clip(od_for[cell_class][component].mean() / OD_MAX, 0.0, 1.0))
                found.append((first_pixel, component, cell_class, confidence))

        found.sort(key=lambda item: item[0])
        return [
            PredictionInstance(
                mask=BinaryMask.from_bitmap(component),
                cell_class=cell_class,
                confidence=confidence,
                id=f"b{rank:06d}",
            )
            for rank, (_, component, cell_class, confidence) in enumerate(found)
        ]
