import pytest
from numpy.testing import assert_allclose

from core.exceptions import EvaluationError
from core.geometry import BoundingBox, Detection
from core.metrics import (
    Report,
    SceneResult,
    accuracy_boxes,
    accuracy_labels,
    accuracy_matched,
    grid_search,
    grid_search_lambda,
    grid_search_threshold,
    median_of_ties,
    standard_error,
)


def result(true, pred, scene="s"):
    return SceneResult(scene, "m", tuple(true), tuple(pred))


def box(x):
    return BoundingBox(float(x), 0.0, float(x) + 10.0, 10.0)


class TestSceneResult:
    def test_count_right_labels_wrong(self):
        r = result([1, 2, 2], [1, 1, 2])
        assert r.boxes_correct
        assert not r.labels_correct

    def test_labels_compare_as_multisets(self):
        assert result([3, 1, 2], [2, 3, 1]).labels_correct

    def test_from_detections(self):
        dets = [Detection(0.9, box(0), 0.5, 4, 0), Detection(0.8, box(20), 0.5, 7, 1)]
        r = SceneResult.from_detections("test-00001", "nms", [7, 4], [box(20), box(0)], dets, wall_time=0.25)
        assert r.pred_labels == (4, 7)
        assert r.labels_correct
        assert r.to_dict()["pred_labels"] == [4, 7]

    def test_matched_needs_overlapping_boxes(self):
        truth = (box(0), box(30))
        good = SceneResult("s", "m", (1, 2), (2, 1), true_boxes=truth, pred_boxes=(box(31), box(1)))
        far = SceneResult("s", "m", (1, 2), (1, 2), true_boxes=truth, pred_boxes=(box(0), box(60)))
        assert good.matched_correct()
        assert not far.matched_correct()
        assert far.labels_correct


class TestAccuracy:
    def test_half_correct(self):
        results = [result([1], [1]), result([1], [2]), result([1], []), result([1, 2], [1])]
        assert accuracy_boxes(results) == (0.5, 0.25)
        acc, _ = accuracy_labels(results)
        assert acc == 0.25

    def test_standard_error(self):
        assert_allclose(standard_error(0.962, 500), 0.0086, atol=5e-5)

    def test_labels_never_beat_boxes(self):
        results = [result([1, 2], [1, 2]), result([1, 2], [1, 1]), result([3], [])]
        assert accuracy_labels(results)[0] <= accuracy_boxes(results)[0]

    def test_empty_input(self):
        with pytest.raises(EvaluationError):
            accuracy_boxes([])
        with pytest.raises(EvaluationError):
            accuracy_matched([])


class TestGridSearch:
    def test_ties_take_the_median(self):
        assert median_of_ties([30, 10, 20]) == 20
        assert median_of_ties([40, 10, 20, 30]) == 20

    def test_picks_each_metric_separately(self):
        def evaluate(value):
            if value == 0.5:
                return [result([1], [1])]
            if value == 0.7:
                return [result([1], [2])]
            return [result([1], [])]

        assert grid_search_threshold(evaluate, [0.3, 0.5, 0.7, 0.9]) == (0.5, 0.5)

    def test_plateau(self):
        def evaluate(value):
            return [result([1], [1] if value in (10, 20, 30) else [1, 1])]

        assert grid_search_lambda(evaluate, [5, 10, 20, 30, 40]) == (20, 20)

    def test_singleton_grid(self):
        assert grid_search_threshold(lambda v: [result([1], [])], [0.4]) == (0.4, 0.4)

    def test_scores_every_value_once(self):
        calls = []

        def evaluate(value):
            calls.append(value)
            return [result([1], [1])]

        out = grid_search(evaluate, [1, 2, 3])
        assert calls == [1, 2, 3]
        assert out.scores == {1: (1, 1), 2: (1, 1), 3: (1, 1)}

    def test_empty_grid(self):
        with pytest.raises(EvaluationError):
            grid_search(lambda v: [], [])


def test_report_row_merges_extras():
    report = Report("dsa", "lambda", 20.0, 10.0, 0.9, 0.01, 0.8, 0.02, 100, extras={"matched": 0.7})
    row = report.to_row()
    assert row["method"] == "dsa" and row["matched"] == 0.7
    assert "extras" not in row
