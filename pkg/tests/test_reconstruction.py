import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import template_decoder, template_decoders, truth_detections
from core.decoder import decoder_forward, init_model
from core.detection_simulator import shift_profile, simulate_detections
from core.exceptions import ArtifactError, ConfigError, GeometryError
from core.geometry import BoundingBox, PixelSet, blank_mask
from core.reconstruction import (
    LatentPosterior,
    ReconCache,
    ReconConfig,
    affine_map,
    bilinear_sample,
    box_frame,
    fit_objective,
    grid_scale,
    occlusion_order,
    single_reconstruction,
    warp_decode,
    warp_gradients,
    whole_reconstruction,
)
from core.scene_builder import gen_eval_sets


def rel_err(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(np.max(np.abs(b)), 1e-8)


def bilinear_oracle(src, x, y):
    h, w = src.shape[:2]
    out = np.zeros(src.shape[2])
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    for yy in (y0, y0 + 1):
        for xx in (x0, x0 + 1):
            if 0 <= xx < w and 0 <= yy < h:
                out += (1 - abs(x - xx)) * (1 - abs(y - yy)) * src[yy, xx]
    return out


class TestSamplingGrid:
    def test_affine_map_scales_then_shifts(self):
        assert affine_map((10.0, 6.0), (0.0, 0.0), (0.5, 0.5)) == (5.0, 3.0)
        assert affine_map((10.0, 6.0), (2.0, 0.0), (0.5, 0.5)) == (6.0, 3.0)

    def test_affine_map_rotates_about_the_centre(self):
        x, y = affine_map((2.0, 1.0), (0.0, 0.0), (1.0, 1.0), alpha=90.0, center=(1.0, 1.0))
        assert_allclose((x, y), (1.0, 2.0), atol=1e-12)

    def test_bilinear_matches_the_oracle(self):
        rng = np.random.default_rng(0)
        src = rng.uniform(size=(5, 7, 3))
        for x, y in rng.uniform(-1.5, 7.5, size=(200, 2)):
            assert_allclose(bilinear_sample(src, (x, y)), bilinear_oracle(src, x, y), atol=1e-12)

    def test_bilinear_special_points(self):
        src = np.zeros((2, 2, 3))
        src[0, 0] = 1.0
        src[0, 1] = 3.0
        assert_array_equal(bilinear_sample(src, (1.0, 0.0)), [3.0, 3.0, 3.0])
        assert_allclose(bilinear_sample(src, (0.5, 0.0)), [2.0, 2.0, 2.0])
        assert_array_equal(bilinear_sample(src, (-5.0, -5.0)), [0.0, 0.0, 0.0])

    def test_identity_warp(self):
        model = template_decoder(1)
        post = LatentPosterior.prior(model.n_z, grid_scale(model, model.d))
        assert_array_equal(warp_decode(model, post, model.d), decoder_forward(model, np.zeros(model.n_z)))

    def test_grid_scale(self):
        model = template_decoder(1, side=50)
        assert grid_scale(model, 100) == (0.5, 0.5)

    def test_box_frame_is_square(self):
        assert box_frame(BoundingBox(86.0, 80.0, 114.0, 120.0)) == (86, 80, 28, 40, 40)


class TestWarpGradients:
    @pytest.fixture
    def setup(self):
        rng = np.random.default_rng(4)
        model = init_model(cls=1, rng=rng, n_z=2, d=6, hidden=4)
        model.b1 = rng.normal(size=4)
        z = rng.normal(size=2)
        upstream = rng.normal(size=(9, 9, 3))
        return model, z, upstream

    @staticmethod
    def objective(model, z, t, alpha, upstream):
        post = LatentPosterior(z, np.zeros_like(z), np.asarray(t, dtype=float), (6 / 9, 6 / 9), alpha)
        return float(np.sum(upstream * warp_decode(model, post, 9, z=z)))

    def test_pose_gradients_match_finite_differences(self, setup):
        model, z, upstream = setup
        t, alpha = np.array([0.3, 0.2]), 7.3
        dz, dt, d_alpha = warp_gradients(model, z, t, (6 / 9, 6 / 9), 9, upstream, alpha)
        h = 1e-6
        num_t = np.zeros(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            num_t[k] = (self.objective(model, z, t + e, alpha, upstream)
                        - self.objective(model, z, t - e, alpha, upstream)) / (2 * h)
        num_alpha = (self.objective(model, z, t, alpha + h, upstream)
                     - self.objective(model, z, t, alpha - h, upstream)) / (2 * h)
        assert rel_err(dt, num_t) < 1e-3
        assert abs(d_alpha - num_alpha) / max(abs(num_alpha), 1e-8) < 1e-3

    def test_latent_gradient_matches_finite_differences(self, setup):
        model, z, upstream = setup
        t = np.array([0.3, 0.2])
        dz, _, _ = warp_gradients(model, z, t, (6 / 9, 6 / 9), 9, upstream)
        h = 1e-5
        num = np.zeros(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            num[k] = (self.objective(model, z + e, t, None, upstream)
                      - self.objective(model, z - e, t, None, upstream)) / (2 * h)
        assert rel_err(dz, num) < 1e-3


class TestFitObjectiveGradients:
    """Gradients of kl + data through the sampled latent, the shift and the rotation."""

    @pytest.fixture
    def setup(self):
        rng = np.random.default_rng(11)
        model = init_model(cls=1, rng=rng, n_z=2, d=6, hidden=4)
        model.b1 = rng.normal(size=4)
        target = rng.uniform(size=(7, 8, 3))
        weight = (rng.uniform(size=(7, 8, 1)) > 0.3).astype(np.float64)
        eps = rng.normal(size=2)
        post = LatentPosterior(rng.normal(size=2) * 0.5, rng.normal(size=2) * 0.3,
                               np.array([0.3, -0.2]), (6 / 9, 6 / 9), 6.1)
        return model, post, eps, target, weight

    @staticmethod
    def total(model, post, eps, target, weight):
        kl, data, _ = fit_objective(model, post, eps, target, weight, 9, (1, 0), 0.3)
        return kl + data

    def shifted(self, post, field_name, k, h):
        moved = LatentPosterior(post.mu.copy(), post.log_tau.copy(), post.t.copy(), post.s, post.alpha)
        if field_name == "alpha":
            moved.alpha = post.alpha + h
        else:
            getattr(moved, field_name)[k] += h
        return moved

    def numeric(self, setup, field_name, size):
        model, post, eps, target, weight = setup
        h = 1e-6
        out = np.zeros(size)
        for k in range(size):
            plus = self.total(model, self.shifted(post, field_name, k, h), eps, target, weight)
            minus = self.total(model, self.shifted(post, field_name, k, -h), eps, target, weight)
            out[k] = (plus - minus) / (2 * h)
        return out

    @pytest.mark.parametrize("field_name", ["mu", "log_tau", "t"])
    def test_vector_gradients(self, setup, field_name):
        model, post, eps, target, weight = setup
        _, _, grads = fit_objective(model, post, eps, target, weight, 9, (1, 0), 0.3)
        assert rel_err(getattr(grads, field_name), self.numeric(setup, field_name, 2)) < 1e-3

    def test_rotation_gradient(self, setup):
        model, post, eps, target, weight = setup
        _, _, grads = fit_objective(model, post, eps, target, weight, 9, (1, 0), 0.3)
        num = self.numeric(setup, "alpha", 1)[0]
        assert abs(grads.alpha - num) / max(abs(num), 1e-8) < 1e-3

    def test_kl_term_matches_the_posterior(self, setup):
        model, post, eps, target, weight = setup
        kl, data, _ = fit_objective(model, post, eps, target, weight, 9, (1, 0), 0.3)
        assert kl == pytest.approx(post.kl())
        assert data > 0.0


class TestSingleReconstruction:
    def test_fully_visible_object(self, disk_scene, fast_recon):
        image, _ = disk_scene.render()
        det = truth_detections(disk_scene)[0]
        target = image[86:114, 86:114]
        visible = PixelSet.from_mask(np.ones((28, 28), dtype=bool))
        single = single_reconstruction(target, visible, det, template_decoder(1), fast_recon)
        assert not single.unconstrained
        assert single.bb_star == det.box
        assert len(single.trace) == fast_recon.n_iter
        assert np.mean((single.recon - target) ** 2) < 0.01

    def test_empty_visible_set_is_unconstrained(self, disk_scene, fast_recon):
        det = truth_detections(disk_scene)[0]
        empty = PixelSet(np.zeros((0, 2)), (0, 0))
        single = single_reconstruction(np.zeros((0, 0, 3)), empty, det, template_decoder(1), fast_recon)
        assert single.unconstrained
        assert single.final_loss == 0.0
        assert single.posterior.kl() == 0.0

    def test_class_mismatch(self, disk_scene, fast_recon):
        det = truth_detections(disk_scene)[0]
        visible = PixelSet.from_mask(np.ones((28, 28), dtype=bool))
        with pytest.raises(ConfigError):
            single_reconstruction(np.zeros((28, 28, 3)), visible, det, template_decoder(4), fast_recon)


class TestWholeReconstruction:
    def test_empty_subset_is_black(self, disk_scene, fast_recon):
        image, _ = disk_scene.render()
        whole = whole_reconstruction([], ReconCache(), image, {}, fast_recon)
        assert np.all(whole.canvas == 0.0)
        assert np.all(whole.owner == -1)

    def test_reconstructs_the_scene(self, two_object_scene, fast_recon):
        image, _ = two_object_scene.render()
        dets = truth_detections(two_object_scene)
        whole = whole_reconstruction(dets, ReconCache(), image, template_decoders([1, 4]), fast_recon)
        assert np.mean((whole.canvas - image) ** 2) < 0.01

    def test_every_lit_pixel_is_owned(self, two_object_scene, fast_recon):
        image, _ = two_object_scene.render()
        dets = truth_detections(two_object_scene)
        whole = whole_reconstruction(dets, ReconCache(), image, template_decoders([1, 4]), fast_recon)
        lit = ~blank_mask(whole.canvas)
        assert np.all(whole.owner[lit] >= 0)
        assert np.all(whole.canvas[whole.owner < 0] == 0.0)
        for det in dets:
            single = whole.cache.get(det.key)
            sx, sy = int(single.bb_star.x_min), int(single.bb_star.y_min)
            ys, xs = np.nonzero(whole.owner == det.index)
            assert len(ys) > 0
            assert_array_equal(whole.canvas[ys, xs], single.recon[ys - sy, xs - sx])

    def test_front_detection_owns_the_overlap(self, two_object_scene, fast_recon):
        image, _ = two_object_scene.render()
        disk, square = truth_detections(two_object_scene)
        assert [d.index for d in occlusion_order([square, disk])] == [disk.index, square.index]
        whole = whole_reconstruction([square, disk], ReconCache(), image, template_decoders([1, 4]), fast_recon)
        assert whole.owner[100, 101] == disk.index
        assert whole.owner[100, 115] == square.index

    def test_warm_cache_is_reused(self, two_object_scene, fast_recon):
        image, _ = two_object_scene.render()
        dets = truth_detections(two_object_scene)
        models = template_decoders([1, 4])
        cache = ReconCache()
        first = whole_reconstruction(dets, cache, image, models, fast_recon)
        assert cache.computed == 2
        second = whole_reconstruction(dets, cache, image, models, fast_recon)
        assert cache.computed == 2
        assert_array_equal(first.canvas, second.canvas)

    def test_duplicate_indices(self, disk_scene, fast_recon):
        image, _ = disk_scene.render()
        det = truth_detections(disk_scene)[0]
        with pytest.raises(GeometryError):
            whole_reconstruction([det, det], ReconCache(), image, template_decoders([1]), fast_recon)

    def test_missing_model(self, disk_scene, fast_recon):
        image, _ = disk_scene.render()
        with pytest.raises(ArtifactError, match="train-decoder"):
            whole_reconstruction(truth_detections(disk_scene), ReconCache(), image, {}, fast_recon)


def expected_owner(whole, subset, shape):
    """First detection in front-to-back order whose support covers each pixel."""
    h, w = shape
    owner = np.full((h, w), -1, dtype=np.int64)
    for det in occlusion_order(subset):
        single = whole.cache.get(det.key)
        L = single.side
        sx, sy = int(single.bb_star.x_min), int(single.bb_star.y_min)
        x0, y0, x1, y1 = max(sx, 0), max(sy, 0), min(sx + L, w), min(sy + L, h)
        if x0 >= x1 or y0 >= y1:
            continue
        support = single.support[y0 - sy:y1 - sy, x0 - sx:x1 - sx]
        window = owner[y0:y1, x0:x1]
        window[support & (window < 0)] = det.index
    return owner


@pytest.mark.slow
class TestCompositingOnSimulatedScenes:
    def test_ownership_and_warm_cache(self):
        validation, _ = gen_eval_sets(seed=13, validation_counts=((3, 100),), test_counts=())
        models = template_decoders(range(1, 11))
        cfg = ReconConfig(n_iter=3, seed=1)
        noise = shift_profile("baseline")
        for k, scene in enumerate(validation):
            image, truth = scene.render()
            dets = simulate_detections(truth, noise, rng=np.random.default_rng(k))
            cache = ReconCache()
            whole = whole_reconstruction(dets, cache, image, models, cfg)

            lit = ~blank_mask(whole.canvas)
            assert np.all(whole.owner[lit] >= 0)
            assert np.all(whole.canvas[~lit] == 0.0)
            assert_array_equal(whole.owner, expected_owner(whole, dets, image.shape[:2]))
            for det in dets:
                single = cache.get(det.key)
                sx, sy = int(single.bb_star.x_min), int(single.bb_star.y_min)
                ys, xs = np.nonzero(whole.owner == det.index)
                assert_array_equal(whole.canvas[ys, xs], single.recon[ys - sy, xs - sx])

            computed = cache.computed
            again = whole_reconstruction(dets, cache, image, models, cfg)
            assert cache.computed == computed == len(dets)
            assert_array_equal(again.canvas, whole.canvas)
            assert_array_equal(again.owner, whole.owner)
