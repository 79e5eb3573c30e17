"""
Suppression
===========

Baseline post-processing: NMS, Soft-NMS, DIoU-NMS and final score
thresholding. Suppression is class-agnostic unless `per_class` is set.
Score ties are broken by the lower detection index.
"""

from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from core.exceptions import ConfigError
from core.geometry import BoundingBox, Detection, diou, iou

SOFT_METHODS = ("linear", "gaussian")


@dataclass(frozen=True)
class NmsConfig:
    nt: float = 0.5
    soft_method: str = "linear"
    soft_sigma: float = 0.5
    per_class: bool = False

    def __post_init__(self):
        if not 0.0 <= self.nt <= 1.0:
            raise ConfigError(f"nms.nt must be in [0, 1], got {self.nt}")
        if self.soft_method not in SOFT_METHODS:
            raise ConfigError(f"nms.soft_method must be one of {SOFT_METHODS}, got '{self.soft_method}'")
        if self.soft_sigma <= 0:
            raise ConfigError(f"nms.soft_sigma must be > 0, got {self.soft_sigma}")


def _rank(dets: Sequence[Detection]) -> List[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.index))


def _greedy_suppress(
    dets: Sequence[Detection],
    nt: float,
    overlap: Callable[[BoundingBox, BoundingBox], float],
    per_class: bool,
) -> List[Detection]:
    remaining = _rank(dets)
    kept: List[Detection] = []
    while remaining:
        top = remaining.pop(0)
        kept.append(top)
        remaining = [
            d for d in remaining
            if (per_class and d.cls != top.cls) or overlap(top.box, d.box) <= nt
        ]
    return kept


def nms(dets: Sequence[Detection], nt: float, per_class: bool = False) -> List[Detection]:
    """Keep the best box, drop every remaining box with IoU > nt against it, repeat."""
    return _greedy_suppress(dets, nt, iou, per_class)


def diou_nms(dets: Sequence[Detection], nt: float, per_class: bool = False) -> List[Detection]:
    """NMS with the DIoU criterion in place of IoU."""
    return _greedy_suppress(dets, nt, diou, per_class)


def soft_nms(dets: Sequence[Detection], cfg: NmsConfig = NmsConfig()) -> List[Detection]:
    """
    Rescore instead of removing.

    After each max-score pick every remaining score is multiplied by
    (1 - iou) for the linear decay or exp(-iou^2 / sigma) for the gaussian
    one. All detections are returned, in pick order, with their final scores.
    """
    remaining = list(dets)
    scores = [d.score for d in remaining]
    out: List[Detection] = []
    while remaining:
        best = min(range(len(remaining)), key=lambda i: (-scores[i], remaining[i].index))
        top = remaining.pop(best)
        out.append(top.with_score(scores.pop(best)))
        for i, d in enumerate(remaining):
            if cfg.per_class and d.cls != top.cls:
                continue
            overlap = iou(top.box, d.box)
            if overlap <= 0.0:
                continue
            if cfg.soft_method == "linear":
                factor = 1.0 - overlap
            else:
                factor = float(np.exp(-(overlap * overlap) / cfg.soft_sigma))
            scores[i] = scores[i] * factor
    return out


def threshold_select(dets: Sequence[Detection], t: float) -> List[Detection]:
    """Detections with score strictly above t."""
    return [d for d in dets if d.score > t]
