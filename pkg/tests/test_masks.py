import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bitmap_intersection, rect_mask
from ihcq.errors import (
    EmptyMaskError,
    MalformedMaskError,
    MaskShapeError,
    UndefinedIoUError,
)
from ihcq.masks import (
    BinaryMask,
    Polygon,
    decode,
    encode,
    intersection_area,
    iou,
    mask_to_polygon,
    rasterize,
    trace_boundaries,
    union_area,
)


# -- run-length coding -------------------------------------------------------


def test_encode_example_from_format_definition():
    bitmap = np.array([[1, 1, 0], [0, 0, 0]], dtype=bool)
    assert encode(bitmap) == (0, 2, 4)


def test_encode_all_background():
    assert encode(np.zeros((2, 2), dtype=bool)) == (4,)


def test_decode_rejects_wrong_total():
    with pytest.raises(MalformedMaskError):
        decode((3,), 2, 2)


def test_decode_rejects_interior_zero_run():
    with pytest.raises(MalformedMaskError):
        BinaryMask(width=3, height=1, runs=(1, 0, 2))


def test_mask_requires_positive_dims():
    with pytest.raises(MalformedMaskError):
        BinaryMask(width=0, height=3, runs=(0,))


@given(st.integers(0, 2**16 - 1))
def test_roundtrip_16x16(bits):
    bitmap = np.array([(bits >> k) & 1 for k in range(256)], dtype=bool).reshape(16, 16)
    assert np.array_equal(decode(encode(bitmap), 16, 16), bitmap)


@settings(max_examples=200)
@given(st.lists(st.booleans(), min_size=12, max_size=12))
def test_encode_decode_identities(flags):
    bitmap = np.array(flags, dtype=bool).reshape(3, 4)
    runs = encode(bitmap)
    assert np.array_equal(decode(runs, 4, 3), bitmap)
    assert encode(decode(runs, 4, 3)) == runs


# -- areas, intersection, union, IoU -----------------------------------------


def test_intersection_identity():
    m = rect_mask(8, 8, 1, 1, 4, 5)
    assert intersection_area(m, m) == m.area()


def test_disjoint_masks():
    a = rect_mask(8, 8, 0, 0, 2, 2)
    b = rect_mask(8, 8, 5, 5, 8, 8)
    assert intersection_area(a, b) == 0
    assert union_area(a, b) == a.area() + b.area()
    assert iou(a, b) == 0.0


def test_offset_squares_worked_example():
    # two 2x2 squares on a 4x4 patch, offset by one column
    a = rect_mask(4, 4, 0, 0, 2, 2)
    b = rect_mask(4, 4, 1, 0, 3, 2)
    assert intersection_area(a, b) == 2
    assert union_area(a, b) == 6
    assert iou(a, b) == pytest.approx(1 / 3, abs=0)


def test_identical_masks_full_iou():
    m = rect_mask(6, 6, 2, 2, 5, 5)
    assert iou(m, m) == 1.0


def test_iou_undefined_for_two_empty_masks():
    empty = BinaryMask(width=3, height=3, runs=(9,))
    with pytest.raises(UndefinedIoUError):
        iou(empty, empty)


def test_dimension_mismatch():
    with pytest.raises(MaskShapeError):
        intersection_area(rect_mask(4, 4, 0, 0, 1, 1), rect_mask(5, 4, 0, 0, 1, 1))


def test_run_merge_matches_pixel_loop_randomized(rng):
    # noise masks stress the run representation (many short runs)
    for _ in range(60):
        size = int(rng.integers(2, 257))
        a = BinaryMask.from_bitmap(rng.random((size, size)) < 0.4)
        b = BinaryMask.from_bitmap(rng.random((size, size)) < 0.4)
        expected = bitmap_intersection(a, b)
        assert intersection_area(a, b) == expected
        assert union_area(a, b) == a.area() + b.area() - expected
        if a.area() or b.area():
            assert min(a.area(), b.area()) >= intersection_area(a, b)
            assert union_area(a, b) >= max(a.area(), b.area())


def test_iou_symmetric_randomized(rng):
    for _ in range(40):
        a = BinaryMask.from_bitmap(rng.random((32, 32)) < 0.3)
        b = BinaryMask.from_bitmap(rng.random((32, 32)) < 0.3)
        if a.area() == 0 and b.area() == 0:
            continue
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0


# -- rasterization ------------------------------------------------------------


def point_in_polygon(px, py, vertices):
    """Independent even-odd test: crossings of the +x ray, half-open rule."""
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 <= py) != (y2 <= py):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < x_cross:
                inside = not inside
    return inside


def test_square_rasterization_against_center_oracle():
    poly = Polygon(((0, 0), (2, 0), (2, 2), (0, 2)))
    mask = rasterize(poly, 4, 4)
    bitmap = mask.to_bitmap()
    for row in range(4):
        for col in range(4):
            expected = point_in_polygon(col + 0.5, row + 0.5, poly.vertices)
            assert bitmap[row, col] == expected
    assert mask.area() == 4
    assert bitmap[:2, :2].all()


def test_degenerate_polygon_rasterizes_empty():
    poly = Polygon(((3.1, 3.1), (3.2, 3.1), (3.2, 3.2)))
    with pytest.raises(EmptyMaskError):
        rasterize(poly, 8, 8)


def test_full_patch_rectangle():
    poly = Polygon(((0, 0), (5, 0), (5, 4), (0, 4)))
    assert rasterize(poly, 5, 4).area() == 20


def test_out_of_bounds_vertex_rejected():
    poly = Polygon(((-3, 0), (5, 0), (5, 4)))
    with pytest.raises(Exception):
        rasterize(poly, 5, 4)


def test_random_polygons_match_center_oracle(rng):
    for _ in range(25):
        n = int(rng.integers(3, 9))
        verts = tuple(
            (float(rng.uniform(0, 16)), float(rng.uniform(0, 16))) for _ in range(n)
        )
        poly = Polygon(verts)
        try:
            mask = rasterize(poly, 16, 16)
        except EmptyMaskError:
            mask = None
        expected = np.zeros((16, 16), dtype=bool)
        for row in range(16):
            for col in range(16):
                expected[row, col] = point_in_polygon(col + 0.5, row + 0.5, verts)
        if mask is None:
            assert not expected.any()
        else:
            assert np.array_equal(mask.to_bitmap(), expected)


def test_rasterization_orientation_independent():
    cw = Polygon(((1, 1), (1, 6), (6, 6), (6, 1)))
    ccw = Polygon(((1, 1), (6, 1), (6, 6), (1, 6)))
    assert rasterize(cw, 8, 8).runs == rasterize(ccw, 8, 8).runs


# -- boundary tracing ----------------------------------------------------------


def test_trace_rectangle_roundtrip():
    mask = rect_mask(10, 8, 2, 1, 7, 6)
    loops = trace_boundaries(mask)
    assert len(loops) == 1
    assert rasterize(loops[0], 10, 8).runs == mask.runs


def test_trace_disk_roundtrip():
    yy, xx = np.mgrid[0:21, 0:21]
    bitmap = (xx - 10) ** 2 + (yy - 10) ** 2 <= 49
    mask = BinaryMask.from_bitmap(bitmap)
    poly = mask_to_polygon(mask)
    assert rasterize(poly, 21, 21).runs == mask.runs


def test_trace_mask_with_hole_fills_it():
    bitmap = np.zeros((9, 9), dtype=bool)
    bitmap[1:8, 1:8] = True
    bitmap[3:6, 3:6] = False
    mask = BinaryMask.from_bitmap(bitmap)
    loops = trace_boundaries(mask)
    assert len(loops) == 2  # outer boundary and the hole
    outer = mask_to_polygon(mask)
    assert rasterize(outer, 9, 9).area() == 49  # hole filled


def test_trace_random_connected_blobs_roundtrip(rng):
    from scipy import ndimage

    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    for _ in range(20):
        bitmap = rng.random((24, 24)) < 0.45
        labels, count = ndimage.label(bitmap, structure=structure)
        if count == 0:
            continue
        component = labels == 1
        # fill holes so the outer loop describes the component exactly
        component = ndimage.binary_fill_holes(component)
        mask = BinaryMask.from_bitmap(component)
        poly = mask_to_polygon(mask)
        assert rasterize(poly, 24, 24).runs == mask.runs
