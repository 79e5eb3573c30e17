from collections import Counter

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import make_scene, make_spec
from core import settings
from core.exceptions import GenerationError
from core.geometry import blank_mask
from core.scene_builder import (
    Scene,
    gen_decoder_dataset,
    gen_eval_sets,
    gen_pairs_dataset,
    object_tilt,
    pair_labels,
    perturb_enlarge,
    perturb_rotate,
    render_scene,
    sample_color,
)
from validators.scene_validator import SceneValidator


class TestRenderScene:
    def test_background_stays_black(self, two_object_scene):
        image, truth = two_object_scene.render()
        visible = np.any(np.stack(truth.visible_masks), axis=0)
        assert np.all(image[~visible] == 0.0)
        assert not blank_mask(image)[visible].any()

    def test_front_object_owns_the_overlap(self, two_object_scene):
        _, truth = two_object_scene.render()
        overlap = truth.amodal_masks[0] & truth.amodal_masks[1]
        assert overlap.any()
        assert truth.visible_masks[0][overlap].all()
        assert not truth.visible_masks[1][overlap].any()

    def test_masks_are_consistent(self, two_object_scene):
        _, truth = two_object_scene.render()
        assert not np.any(truth.visible_masks[0] & truth.visible_masks[1])
        for vis, amodal in zip(truth.visible_masks, truth.amodal_masks):
            assert np.all(amodal | ~vis)

    def test_boxes_are_tight_around_amodal_masks(self, disk_scene):
        _, truth = disk_scene.render()
        assert truth.boxes[0].to_list() == [86.0, 86.0, 114.0, 114.0]

    def test_rendering_is_deterministic(self, two_object_scene):
        a, _ = two_object_scene.render()
        b, _ = two_object_scene.render()
        assert_array_equal(a, b)

    def test_pixels_are_shaded_object_colour(self, disk_scene):
        image, truth = disk_scene.render()
        lit = image[truth.visible_masks[0]]
        ratios = lit / np.asarray(disk_scene.color)
        assert_allclose(ratios[:, 0], ratios[:, 2])
        assert ratios.min() >= settings.SHAPE_CLASSES[1]["shading"]["floor"] - 1e-12

    def test_duplicate_depth_ranks(self):
        with pytest.raises(GenerationError, match="depth"):
            render_scene([make_spec(1, (50.0, 50.0)), make_spec(2, (80.0, 80.0))], (1.0, 1.0, 1.0))

    def test_off_canvas_object(self):
        with pytest.raises(GenerationError, match="degenerate"):
            render_scene([make_spec(1, (-100.0, -100.0))], (1.0, 1.0, 1.0))

    def test_rotation_invariant_classes_do_not_tilt(self):
        assert object_tilt(make_spec(1, (0.0, 0.0), rotation=90.0)) == 0.0
        assert object_tilt(make_spec(4, (0.0, 0.0), rotation=90.0)) != 0.0


class TestSampling:
    def test_colour_is_bright_enough(self):
        rng = np.random.default_rng(0)
        assert all(sum(sample_color(rng)) >= 1.0 for _ in range(200))

    def test_pair_labels_are_balanced(self):
        pairs = pair_labels(seed=7, n_per_class=2)
        assert len(pairs) == 10
        counts = Counter(c for pair in pairs for c in pair)
        assert counts == Counter({c: 2 for c in settings.SHAPE_CLASSES})

    def test_pairs_dataset(self):
        scenes = gen_pairs_dataset(seed=3, n_per_class=2)
        validator = SceneValidator()
        assert len(scenes) == 10
        for scene in scenes:
            image, truth = scene.render()
            assert scene.n_objects == 2
            assert np.any(truth.amodal_masks[0] & truth.amodal_masks[1])
            assert validator.validate(scene.scene_id, image, truth).is_valid()

    def test_same_seed_same_scenes(self):
        assert gen_pairs_dataset(seed=11, n_per_class=1) == gen_pairs_dataset(seed=11, n_per_class=1)

    def test_decoder_dataset_is_centred_and_sized(self):
        pairs = gen_pairs_dataset(seed=3, n_per_class=1)
        samples = gen_decoder_dataset(pairs)
        assert len(samples) == 2 * len(pairs)
        for sample in samples[:4]:
            image = sample.render()
            assert image.shape == (50, 50, 3)
            ys, xs = np.nonzero(~blank_mask(image))
            assert max(xs.max() - xs.min(), ys.max() - ys.min()) >= 45

    def test_eval_set_composition(self):
        validation, test = gen_eval_sets(seed=5, validation_counts=((3, 2),), test_counts=((5, 1), (6, 1)))
        assert [s.n_objects for s in validation] == [3, 3]
        assert [s.n_objects for s in test] == [5, 6]
        assert test[0].scene_id == "test-00000"

    def test_exhausted_budget_reports_rejections(self):
        with pytest.raises(GenerationError, match="rejection budget") as excinfo:
            gen_eval_sets(seed=0, validation_counts=((7, 1),), test_counts=(), min_visible=5000, budget=3)
        assert sum(excinfo.value.counts.values()) == 3


class TestPerturbations:
    def test_rotate_adds_the_angle(self, separated_scene):
        rotated = perturb_rotate([separated_scene], 10.0)[0]
        assert [o.rotation for o in rotated.objects] == [10.0, 10.0]
        assert perturb_rotate([separated_scene], 360.0)[0] == separated_scene

    @pytest.mark.parametrize("degrees", [37.0, 90.0, 215.5])
    def test_rotate_leaves_round_classes_unchanged(self, degrees):
        scene = make_scene([make_spec(1, (60.0, 60.0), depth=0), make_spec(3, (140.0, 140.0), depth=1)])
        image, truth = scene.render()
        rotated_image, rotated_truth = perturb_rotate([scene], degrees)[0].render()
        for before, after in zip(truth.amodal_masks, rotated_truth.amodal_masks):
            assert_array_equal(before, after)
        assert_array_equal(image, rotated_image)

    def test_rotate_changes_tilting_classes(self):
        scene = make_scene([make_spec(4, (100.0, 100.0))])
        _, truth = scene.render()
        _, rotated = perturb_rotate([scene], 37.0)[0].render()
        assert not np.array_equal(truth.amodal_masks[0], rotated.amodal_masks[0])

    def test_enlarge_crops_around_every_object(self, separated_scene):
        enlarged = perturb_enlarge([separated_scene], 180)[0]
        assert enlarged.window == (9, 9, 180)
        image, truth = enlarged.render()
        assert image.shape == (200, 200, 3)
        _, original = separated_scene.render()
        factor = 200.0 / 180.0
        assert_allclose(truth.boxes[0].width, original.boxes[0].width * factor)
        assert np.all(image[truth.owner_map() < 0] == 0.0)

    def test_enlarge_round_trips_through_dicts(self, separated_scene):
        enlarged = perturb_enlarge([separated_scene], 180)[0]
        assert Scene.from_dict(enlarged.to_dict()) == enlarged

    def test_enlarge_needs_objects_to_fit(self):
        scene = make_scene([make_spec(1, (16.0, 16.0), depth=0), make_spec(4, (185.0, 185.0), depth=1)])
        with pytest.raises(GenerationError, match="do not fit"):
            perturb_enlarge([scene], 180)
