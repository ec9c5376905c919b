import numpy as np
import pytest

from ihcq.core import CellClass, GroundTruthInstance, PredictionInstance
from ihcq.masks import BinaryMask


def rect_mask(width, height, x0, y0, x1, y1):
    bitmap = np.zeros((height, width), dtype=bool)
    bitmap[y0:y1, x0:x1] = True
    return BinaryMask.from_bitmap(bitmap)


def pred(mask, confidence, pid, cell_class=CellClass.IMMUNOPOSITIVE):
    return PredictionInstance(mask=mask, cell_class=cell_class, confidence=confidence, id=pid)


def gt(mask, gid, cell_class=CellClass.IMMUNOPOSITIVE):
    return GroundTruthInstance(mask=mask, cell_class=cell_class, id=gid)


def random_blob_mask(rng, size, max_extent=None):
    """Random non-empty rectangle-union blob; cheap but irregular."""
    max_extent = max_extent or size
    bitmap = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        w = int(rng.integers(1, max_extent))
        h = int(rng.integers(1, max_extent))
        x = int(rng.integers(0, size - w + 1))
        y = int(rng.integers(0, size - h + 1))
        bitmap[y : y + h, x : x + w] = True
    return BinaryMask.from_bitmap(bitmap)


def bitmap_intersection(a: BinaryMask, b: BinaryMask) -> int:
    """Pixel-loop oracle: decode fully and AND the bitmaps."""
    return int(np.logical_and(a.to_bitmap(), b.to_bitmap()).sum())


def bitmap_iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = bitmap_intersection(a, b)
    union = int(np.logical_or(a.to_bitmap(), b.to_bitmap()).sum())
    return inter / union


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
