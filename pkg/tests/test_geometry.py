import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import GeometryError
from core.geometry import (
    BoundingBox,
    Detection,
    PixelSet,
    blank_mask,
    crop,
    diou,
    iou,
    support_mask,
    tight_box,
)


def box(*values):
    return BoundingBox(*[float(v) for v in values])


class TestBoundingBox:
    def test_rejects_degenerate_boxes(self):
        with pytest.raises(GeometryError):
            box(5, 0, 5, 10)
        with pytest.raises(GeometryError):
            box(0, 10, 10, 0)

    def test_may_extend_past_the_image(self):
        b = box(-10, -10, 40, 40)
        assert b.width == 50 and b.area == 2500

    def test_pixel_bounds_are_half_open(self):
        assert box(0, 0, 10, 10).to_pixels() == (0, 0, 10, 10)
        assert box(0.4, 0.6, 9.4, 9.6).to_pixels() == (0, 1, 9, 10)


class TestDetection:
    def test_score_and_occlusion_must_be_probabilities(self):
        with pytest.raises(GeometryError):
            Detection(score=1.2, box=box(0, 0, 1, 1), occ=0.5, cls=1)
        with pytest.raises(GeometryError):
            Detection(score=0.5, box=box(0, 0, 1, 1), occ=-0.1, cls=1)

    def test_dict_form_drops_the_index(self):
        det = Detection(0.9, box(1, 2, 3, 4), 0.3, 7, index=4)
        record = det.to_dict()
        assert record == {"score": 0.9, "box": [1.0, 2.0, 3.0, 4.0], "occ": 0.3, "cls": 7}
        assert Detection.from_dict(record, index=4) == det


class TestIou:
    def test_identity(self):
        b = box(3, 4, 20, 30)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_touching_edges_do_not_overlap(self):
        assert iou(box(0, 0, 10, 10), box(10, 0, 20, 10)) == 0.0

    def test_half_shift(self):
        assert_allclose(iou(box(0, 0, 10, 10), box(5, 0, 15, 10)), 1.0 / 3.0)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = np.sort(rng.uniform(0, 50, 2)) + [0, 1]
            y = np.sort(rng.uniform(0, 50, 2)) + [0, 1]
            u = np.sort(rng.uniform(0, 50, 2)) + [0, 1]
            v = np.sort(rng.uniform(0, 50, 2)) + [0, 1]
            a, b = box(x[0], y[0], x[1], y[1]), box(u[0], v[0], u[1], v[1])
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0
            assert diou(a, b) <= iou(a, b) + 1e-12


class TestDiou:
    def test_identity(self):
        b = box(0, 0, 10, 10)
        assert diou(b, b) == 1.0

    def test_concentric_boxes_reduce_to_iou(self):
        a, b = box(0, 0, 10, 10), box(2, 2, 8, 8)
        assert diou(a, b) == iou(a, b)

    def test_adjacent_boxes(self):
        assert_allclose(diou(box(0, 0, 10, 10), box(10, 0, 20, 10)), -0.2)


class TestCrop:
    def test_full_box_is_identity(self):
        image = np.random.default_rng(1).uniform(size=(20, 30, 3))
        assert_array_equal(crop(image, box(0, 0, 30, 20)), image)

    def test_constant_field(self):
        image = np.full((50, 50, 3), 0.5)
        out = crop(image, box(10, 5, 20, 25))
        assert out.shape == (20, 10, 3)
        assert np.all(out == 0.5)

    def test_clips_at_the_border(self):
        image = np.zeros((200, 200, 3))
        assert crop(image, box(-10, -10, 40, 40)).shape == (40, 40, 3)

    def test_outside_image(self):
        with pytest.raises(GeometryError, match="box outside image"):
            crop(np.zeros((10, 10, 3)), box(20, 20, 30, 30))

    def test_idempotent_on_the_clipped_box(self):
        image = np.random.default_rng(2).uniform(size=(40, 40, 3))
        once = crop(image, box(-5, 10, 25, 60))
        h, w = once.shape[:2]
        assert_array_equal(crop(once, box(0, 0, w, h)), once)


class TestSupportMask:
    def test_black_recon_has_no_support(self):
        assert not support_mask(np.zeros((5, 5, 3)), 0.0).any()

    def test_magnitude_is_the_rgb_norm(self):
        recon = np.zeros((1, 2, 3))
        recon[0, 0] = (0.5, 0.0, 0.0)
        recon[0, 1] = (0.05, 0.05, 0.05)
        assert_array_equal(support_mask(recon, 0.1), [[True, False]])

    def test_zero_threshold_keeps_any_nonzero_pixel(self):
        recon = np.zeros((2, 2, 3))
        recon[1, 1, 2] = 1e-9
        assert_array_equal(support_mask(recon, 0.0), ~blank_mask(recon))

    def test_antitone_in_threshold(self):
        recon = np.random.default_rng(3).uniform(size=(16, 16, 3))
        loose, strict = support_mask(recon, 0.5), support_mask(recon, 0.9)
        assert np.all(loose | ~strict)

    def test_negative_threshold(self):
        with pytest.raises(GeometryError):
            support_mask(np.zeros((1, 1, 3)), -0.1)


class TestPixelSet:
    def test_round_trips_through_a_mask(self):
        mask = np.zeros((4, 6), dtype=bool)
        mask[1, 2] = mask[3, 5] = True
        pixels = PixelSet.from_mask(mask)
        assert len(pixels) == 2
        assert_array_equal(PixelSet(pixels.coords, (4, 6)).to_mask(), mask)

    def test_coordinates_stay_inside_the_frame(self):
        with pytest.raises(GeometryError):
            PixelSet(np.array([[6, 0]]), (4, 6))


class TestTightBox:
    def test_covers_the_mask(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[2:5, 3:8] = True
        assert tight_box(mask) == box(3, 2, 8, 5)

    def test_empty_mask(self):
        assert tight_box(np.zeros((3, 3), dtype=bool)) is None
