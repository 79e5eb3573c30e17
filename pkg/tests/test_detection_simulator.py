import numpy as np
import pytest

from conftest import make_scene, make_spec
from core.detection_simulator import NoiseConfig, index_detections, shift_profile, simulate_detections
from core.exceptions import ConfigError


@pytest.fixture
def three_deep_scene():
    return make_scene([
        make_spec(1, (80.0, 100.0), depth=2),
        make_spec(4, (100.0, 100.0), depth=0),
        make_spec(9, (120.0, 110.0), depth=1),
    ])


class TestZeroNoise:
    def test_lifts_ground_truth_exactly(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        dets = simulate_detections(truth, NoiseConfig.zero(score=0.99))
        assert len(dets) == 3
        assert sorted(d.box.to_list() for d in dets) == sorted(b.to_list() for b in truth.boxes)
        assert all(d.score == 0.99 for d in dets)
        assert sorted(d.cls for d in dets) == sorted(truth.labels)

    def test_occlusion_score_decreases_with_depth(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        dets = simulate_detections(truth, NoiseConfig.zero())
        by_box = {tuple(d.box.to_list()): d for d in dets}
        occ = [by_box[tuple(b.to_list())].occ for b in truth.boxes]
        depth = [o.depth_rank for o in truth.objects]
        order = np.argsort(depth)
        assert all(np.diff(np.asarray(occ)[order]) < 0)


class TestNoisyOutput:
    def test_sorted_by_score_and_indexed(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        dets = simulate_detections(truth, shift_profile("baseline"), rng=np.random.default_rng(4))
        assert [d.index for d in dets] == list(range(len(dets)))
        scores = [d.score for d in dets]
        assert scores == sorted(scores, reverse=True)
        assert all(0.0 <= d.occ <= 1.0 for d in dets)

    def test_same_stream_same_detections(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        a = simulate_detections(truth, shift_profile("baseline"), rng=np.random.default_rng(9))
        b = simulate_detections(truth, shift_profile("baseline"), rng=np.random.default_rng(9))
        assert a == b

    def test_duplicates_and_false_positives_appear(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        cfg = NoiseConfig(dup_rate=2.0, fp_rate=3.0)
        dets = simulate_detections(truth, cfg, rng=np.random.default_rng(0))
        assert len(dets) > 3

    def test_label_shift_confuses_8_with_9(self):
        scene = make_scene([make_spec(8, (100.0, 100.0))])
        _, truth = scene.render()
        cfg = shift_profile("label_shift")
        labels = [
            simulate_detections(truth, cfg, rng=np.random.default_rng(seed))[0].cls
            for seed in range(200)
        ]
        assert 0.65 < labels.count(9) / len(labels) < 0.95

    def test_score_shift_lowers_true_scores(self):
        assert shift_profile("score_shift").score_floor < shift_profile("baseline").score_floor


class TestProfiles:
    def test_unknown_profile(self):
        with pytest.raises(ConfigError, match="unknown noise profile"):
            shift_profile("nope")

    def test_validates_ranges(self):
        with pytest.raises(ConfigError):
            NoiseConfig(score_floor=0.9, score_ceiling=0.5)
        with pytest.raises(ConfigError):
            NoiseConfig(confusion_pairs=((8, 9, 1.5),))


def test_index_detections_is_stable_on_ties(three_deep_scene):
    _, truth = three_deep_scene.render()
    dets = simulate_detections(truth, NoiseConfig.zero(score=0.9))
    reindexed = index_detections(list(reversed(dets)))
    assert [d.box for d in reindexed] == [d.box for d in reversed(dets)]


class TestDuplicateRate:
    def test_mean_duplicate_count_matches_the_rate(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        cfg = NoiseConfig(box_jitter_sd=0.0, occ_noise_sd=0.0, dup_rate=1.0, fp_rate=0.0)
        rng = np.random.default_rng(21)
        draws = 1000
        extra = np.array([len(simulate_detections(truth, cfg, rng=rng)) - 3 for _ in range(draws)])
        # Poisson(dup_rate * n) with n = 3 objects
        assert abs(extra.mean() - 3.0) < 4.0 * np.sqrt(3.0 / draws)
        assert abs(extra.var() - 3.0) < 0.6

    def test_duplicates_copy_a_true_box_and_class(self, three_deep_scene):
        _, truth = three_deep_scene.render()
        cfg = NoiseConfig(box_jitter_sd=0.0, occ_noise_sd=0.0, dup_rate=2.0, fp_rate=0.0)
        dets = simulate_detections(truth, cfg, rng=np.random.default_rng(2))
        pairs = {(tuple(b.to_list()), spec.cls) for spec, b in zip(truth.objects, truth.boxes)}
        assert len(dets) > 3
        assert all((tuple(d.box.to_list()), d.cls) in pairs for d in dets)
