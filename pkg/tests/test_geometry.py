import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from occlusion_mot.geometry import (
    BoundingBox,
    CenterBox,
    center_to_tlwh,
    iou,
    iou_distance_matrix,
    tlwh_to_center,
)

coord = st.floats(-1e3, 1e3, allow_nan=False)
size = st.floats(1e-2, 1e3, allow_nan=False)
boxes = st.builds(BoundingBox, coord, coord, size, size)


def test_iou_identical():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 10)) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 5, 5)) == 0.0


def test_iou_half_overlap():
    # intersection 50, union 150
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-15)


def test_touching_boxes_give_exact_zero():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 10, 10)) == 0.0


def test_distance_matrix_examples():
    a = BoundingBox(0, 0, 10, 10)
    np.testing.assert_array_equal(iou_distance_matrix([a], [a]), [[0.0]])
    np.testing.assert_array_equal(iou_distance_matrix([a], [BoundingBox(50, 50, 3, 3)]), [[1.0]])
    np.testing.assert_allclose(iou_distance_matrix([a], [BoundingBox(5, 0, 10, 10)]), [[2 / 3]], atol=1e-15)


def test_distance_matrix_empty_shapes():
    a = BoundingBox(0, 0, 1, 1)
    assert iou_distance_matrix([], []).shape == (0, 0)
    assert iou_distance_matrix([a], []).shape == (1, 0)
    assert iou_distance_matrix([], [a, a]).shape == (0, 2)


def test_center_conversions():
    assert tlwh_to_center(BoundingBox(0, 0, 10, 10)) == CenterBox(5, 5, 10, 10)
    assert tlwh_to_center(BoundingBox(3, 4, 2, 6)) == CenterBox(4, 7, 2, 6)


@pytest.mark.parametrize("bad", [(0, 0, 0, 1), (0, 0, 1, -1), (float("nan"), 0, 1, 1), (0, float("inf"), 1, 1)])
def test_invalid_boxes_rejected(bad):
    with pytest.raises(ValueError):
        BoundingBox(*bad)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-9)


@given(boxes)
def test_center_round_trip(b):
    back = center_to_tlwh(tlwh_to_center(b))
    scale = max(1.0, abs(b.x), abs(b.y), b.w, b.h)
    np.testing.assert_allclose(back.to_array(), b.to_array(), rtol=1e-12, atol=1e-12 * scale)


@given(st.lists(boxes, max_size=5), st.lists(boxes, max_size=5))
def test_matrix_matches_scalar_iou(rows, cols):
    m = iou_distance_matrix(rows, cols)
    assert m.shape == (len(rows), len(cols))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            assert m[i, j] == pytest.approx(1.0 - iou(r, c), abs=1e-12)
