import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pseudolabel.geometry import (
    BoxFormat,
    FeatureMap,
    convert,
    giou,
    iou,
    pairwise_giou,
    pairwise_iou,
    roi_align,
)

B = lambda *v: np.array(v, dtype=np.float64)


def lattice_boxes(rng, n, span=64):
    """Random integer-coordinate boxes; exact under the raster oracle."""
    x1 = rng.integers(0, span - 1, (n, 2))
    wh = rng.integers(1, span // 2, (n, 2))
    boxes = np.concatenate([x1, np.minimum(x1 + wh, span)], axis=1).astype(np.float64)
    return boxes


box_strategy = st.tuples(
    st.floats(0, 100), st.floats(0, 100), st.floats(0.1, 100), st.floats(0.1, 100)
).map(lambda t: np.array([t[0], t[1], t[0] + t[2], t[1] + t[3]]))


class TestIoU:
    def test_identity(self):
        assert iou(B(0, 0, 2, 2), B(0, 0, 2, 2)) == 1.0

    def test_disjoint(self):
        assert iou(B(0, 0, 1, 1), B(2, 2, 3, 3)) == 0.0

    def test_overlap_one_seventh(self):
        value = iou(B(0, 0, 2, 2), B(1, 1, 3, 3))
        assert value == pytest.approx(1 / 7, abs=1e-12)
        assert value == pytest.approx(oracles.raster_iou(B(0, 0, 2, 2), B(1, 1, 3, 3)), abs=1e-12)

    def test_zero_area_convention(self):
        assert iou(B(1, 1, 1, 1), B(1, 1, 1, 1)) == 0.0

    def test_matches_raster_oracle(self):
        rng = np.random.default_rng(7)
        a = lattice_boxes(rng, 50)
        b = lattice_boxes(rng, 50)
        for i in range(50):
            assert iou(a[i], b[i]) == pytest.approx(oracles.raster_iou(a[i], b[i]), abs=1e-3)

    @given(box_strategy, box_strategy)
    @settings(max_examples=60)
    def test_symmetry_and_bounds(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0
        assert iou(a, a) == 1.0


class TestGIoU:
    def test_identity(self):
        assert giou(B(0, 0, 2, 2), B(0, 0, 2, 2)) == 1.0

    def test_side_by_side(self):
        assert giou(B(0, 0, 1, 1), B(2, 0, 3, 1)) == pytest.approx(-1 / 3, abs=1e-12)

    def test_far_apart_approaches_minus_one(self):
        assert giou(B(0, 0, 1, 1), B(1000, 1000, 1001, 1001)) < -0.99

    def test_matches_raster_oracle(self):
        rng = np.random.default_rng(11)
        a = lattice_boxes(rng, 50)
        b = lattice_boxes(rng, 50)
        for i in range(50):
            assert giou(a[i], b[i]) == pytest.approx(oracles.raster_giou(a[i], b[i]), abs=1e-3)

    @given(box_strategy, box_strategy)
    @settings(max_examples=60)
    def test_giou_le_iou(self, a, b):
        assert giou(a, b) <= iou(a, b) + 1e-12


def test_pairwise_matches_scalar():
    rng = np.random.default_rng(3)
    a = lattice_boxes(rng, 12)
    b = lattice_boxes(rng, 9)
    mat_iou = pairwise_iou(a, b)
    mat_giou = pairwise_giou(a, b)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            assert mat_iou[i, j] == pytest.approx(iou(a[i], b[j]), abs=1e-12)
            assert mat_giou[i, j] == pytest.approx(giou(a[i], b[j]), abs=1e-12)


class TestConvert:
    def test_corner_to_center(self):
        np.testing.assert_allclose(
            convert(B(0, 0, 2, 2), BoxFormat.XYXY, BoxFormat.CXCYWH), [1, 1, 2, 2]
        )

    def test_normalized_center_to_corner(self):
        np.testing.assert_allclose(
            convert(B(0.5, 0.5, 0.5, 0.5), BoxFormat.CXCYWH_NORM, BoxFormat.XYXY, 100),
            [25, 25, 75, 75],
        )

    def test_requires_image_size(self):
        with pytest.raises(ValueError):
            convert(B(0, 0, 1, 1), BoxFormat.XYXY, BoxFormat.XYXY_NORM)
        with pytest.raises(ValueError):
            convert(B(0, 0, 1, 1), BoxFormat.XYXY, BoxFormat.XYXY_NORM, image_size=0)

    @given(box_strategy, st.sampled_from(list(BoxFormat)))
    @settings(max_examples=60)
    def test_round_trip(self, box, fmt):
        there = convert(box, BoxFormat.XYXY, fmt, image_size=(200, 150))
        back = convert(there, fmt, BoxFormat.XYXY, image_size=(200, 150))
        np.testing.assert_allclose(back, box, atol=1e-9)


class TestRoiAlign:
    def test_constant_map(self):
        fm = FeatureMap(np.full((3, 8, 8), 2.5), stride=1.0)
        out = roi_align(fm, B(1, 1, 6, 6), 2, 3)
        assert out.shape == (3 * 2 * 3,)
        np.testing.assert_allclose(out, 2.5, atol=1e-12)

    @pytest.mark.parametrize("stride", [1.0, 4.0])
    @pytest.mark.parametrize("axis", ["x", "y"])
    def test_ramp_matches_analytic_oracle(self, stride, axis):
        h = w = 16
        if axis == "x":
            vals = np.tile(np.arange(w, dtype=np.float64), (1, h, 1)).reshape(1, h, w)
        else:
            vals = np.tile(np.arange(h, dtype=np.float64)[:, None], (1, 1, w)).reshape(1, h, w)
        fm = FeatureMap(vals, stride=stride)
        # box kept well inside so no sample hits the clamped border
        box = B(2.2 * stride, 3.1 * stride, 12.7 * stride, 13.4 * stride)
        out = roi_align(fm, box, 3, 4, samples_per_bin=3).reshape(3, 4)
        expected = oracles.ramp_roi_means(box, stride, 3, 4, axis)
        np.testing.assert_allclose(out, expected, atol=1e-9)

    def test_linearity_in_map(self):
        rng = np.random.default_rng(0)
        f1 = rng.standard_normal((2, 10, 10))
        f2 = rng.standard_normal((2, 10, 10))
        box = B(0.7, 1.3, 8.9, 7.2)
        a, b = 0.6, -1.7
        lhs = roi_align(FeatureMap(a * f1 + b * f2), box, 3, 3)
        rhs = a * roi_align(FeatureMap(f1), box, 3, 3) + b * roi_align(FeatureMap(f2), box, 3, 3)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_box_outside_map_raises(self):
        fm = FeatureMap(np.ones((1, 4, 4)))
        with pytest.raises(ValueError):
            roi_align(fm, B(10, 10, 12, 12), 2, 2)

    def test_box_clamped_to_extent(self):
        fm = FeatureMap(np.full((1, 4, 4), 3.0))
        out = roi_align(fm, B(-5, -5, 50, 50), 2, 2)
        np.testing.assert_allclose(out, 3.0)

    def test_invalid_pool_shape(self):
        fm = FeatureMap(np.ones((1, 4, 4)))
        with pytest.raises(ValueError):
            roi_align(fm, B(0, 0, 2, 2), 0, 2)


def test_feature_map_validation():
    with pytest.raises(ValueError):
        FeatureMap(np.ones((4, 4)))
    with pytest.raises(ValueError):
        FeatureMap(np.ones((1, 4, 4)), stride=0.0)


def test_box_validation():
    with pytest.raises(ValueError):
        iou(B(2, 0, 0, 2), B(0, 0, 1, 1))
    with pytest.raises(ValueError):
        iou(B(0, 0, np.inf, 1), B(0, 0, 1, 1))
