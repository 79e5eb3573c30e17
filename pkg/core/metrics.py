"""
Metrics
=======

Scene-level accuracies (correct box count, correct label multiset) with
binomial standard errors, and validation grid searches whose ties resolve
to the median of the tied grid values.
"""

import math
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from core import settings
from core.exceptions import EvaluationError
from core.geometry import BoundingBox, Detection, iou

MATCH_IOU = 0.5


@dataclass
class SceneResult:
    scene_id: str
    method: str
    true_labels: Tuple[int, ...]
    pred_labels: Tuple[int, ...]
    wall_time: float = 0.0
    true_boxes: Tuple[BoundingBox, ...] = ()
    pred_boxes: Tuple[BoundingBox, ...] = ()

    @property
    def true_count(self) -> int:
        return len(self.true_labels)

    @property
    def pred_count(self) -> int:
        return len(self.pred_labels)

    @property
    def boxes_correct(self) -> bool:
        return self.pred_count == self.true_count

    @property
    def labels_correct(self) -> bool:
        return Counter(self.pred_labels) == Counter(self.true_labels)

    def matched_correct(self, threshold: float = MATCH_IOU) -> bool:
        """One-to-one IoU >= threshold matching with equal labels covers everything."""
        if not self.boxes_correct:
            return False
        if not self.true_boxes:
            return True
        ok = np.array(
            [
                [iou(t, p) >= threshold and tl == pl for p, pl in zip(self.pred_boxes, self.pred_labels)]
                for t, tl in zip(self.true_boxes, self.true_labels)
            ],
            dtype=float,
        )
        rows, cols = linear_sum_assignment(-ok)
        return bool(ok[rows, cols].sum() == len(self.true_boxes))

    @classmethod
    def from_detections(
        cls, scene_id: str, method: str, truth_labels: Sequence[int], truth_boxes: Sequence[BoundingBox],
        selected: Sequence[Detection], wall_time: float = 0.0,
    ) -> "SceneResult":
        return cls(
            scene_id=scene_id,
            method=method,
            true_labels=tuple(int(c) for c in truth_labels),
            pred_labels=tuple(d.cls for d in selected),
            wall_time=wall_time,
            true_boxes=tuple(truth_boxes),
            pred_boxes=tuple(d.box for d in selected),
        )

    def to_dict(self) -> Dict:
        return {
            "scene": self.scene_id,
            "method": self.method,
            "true_count": self.true_count,
            "pred_count": self.pred_count,
            "true_labels": sorted(self.true_labels),
            "pred_labels": sorted(self.pred_labels),
            "boxes_correct": self.boxes_correct,
            "labels_correct": self.labels_correct,
            "wall_time": round(self.wall_time, 4),
        }


@dataclass
class Report:
    method: str
    param_name: str
    param_boxes: Optional[float]
    param_labels: Optional[float]
    acc_boxes: float
    se_boxes: float
    acc_labels: float
    se_labels: float
    n: int
    extras: Dict[str, object] = field(default_factory=dict)

    def to_row(self) -> Dict[str, object]:
        row = {k: v for k, v in asdict(self).items() if k != "extras"}
        row.update(self.extras)
        return row


def _proportion(flags: Sequence[bool]) -> Tuple[float, float]:
    n = len(flags)
    if n == 0:
        raise EvaluationError("cannot score an empty result set")
    p = sum(bool(f) for f in flags) / n
    return p, standard_error(p, n)


def standard_error(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


def accuracy_boxes(results: Sequence[SceneResult]) -> Tuple[float, float]:
    """Fraction of scenes with the right number of selected boxes, and its SE."""
    return _proportion([r.boxes_correct for r in results])


def accuracy_labels(results: Sequence[SceneResult]) -> Tuple[float, float]:
    """Fraction of scenes whose predicted label multiset equals the truth, and its SE."""
    return _proportion([r.labels_correct for r in results])


def accuracy_matched(results: Sequence[SceneResult], threshold: float = MATCH_IOU) -> Tuple[float, float]:
    return _proportion([r.matched_correct(threshold) for r in results])


# ==============================================================================
# GRID SEARCH
# ==============================================================================

def median_of_ties(values: Sequence[float]) -> float:
    """Median of the tied grid values; the lower middle one for even counts."""
    return statistics.median_low(sorted(values))


@dataclass
class GridSearchResult:
    best_boxes: float
    best_labels: float
    scores: Dict[float, Tuple[int, int]]


def grid_search(
    val_results_fn: Callable[[float], Sequence[SceneResult]],
    grid: Sequence[float],
) -> GridSearchResult:
    """Evaluate every grid value once; pick the best per metric (median on ties)."""
    if not grid:
        raise EvaluationError("grid search needs at least one value")
    scores: Dict[float, Tuple[int, int]] = {}
    for value in grid:
        results = val_results_fn(value)
        if not results:
            raise EvaluationError(f"no validation results for grid value {value}")
        scores[value] = (sum(r.boxes_correct for r in results), sum(r.labels_correct for r in results))

    def _best(metric: int) -> float:
        top = max(s[metric] for s in scores.values())
        return median_of_ties([v for v, s in scores.items() if s[metric] == top])

    return GridSearchResult(_best(0), _best(1), scores)


def grid_search_threshold(
    val_results_fn: Callable[[float], Sequence[SceneResult]],
    grid: Sequence[float] = settings.THRESHOLD_GRID,
) -> Tuple[float, float]:
    """(T_boxes, T_labels) maximizing each validation accuracy."""
    result = grid_search(val_results_fn, grid)
    return result.best_boxes, result.best_labels


def grid_search_lambda(
    val_results_fn: Callable[[float], Sequence[SceneResult]],
    grid: Sequence[float] = settings.LAMBDA_GRID,
) -> Tuple[float, float]:
    """(lambda_boxes, lambda_labels) maximizing each validation accuracy."""
    result = grid_search(val_results_fn, grid)
    return result.best_boxes, result.best_labels
