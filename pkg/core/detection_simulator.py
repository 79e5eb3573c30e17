"""
Detection Simulator
===================

Turns ground truth into noisy detector output: one jittered detection per
object, Poisson duplicates and Poisson false positives, each carrying an
objectness score, an occlusion score and a class label.

Occlusion score is a noisy monotone function of depth rank, so among
overlapping objects the front one scores higher.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core import settings
from core.exceptions import ConfigError
from core.geometry import BoundingBox, Detection
from core.scene_builder import GroundTruth

logger = logging.getLogger(__name__)

ConfusionPair = Tuple[int, int, float]

# Size range (pixels) of uniformly placed false-positive boxes
FP_BOX_SIDE = (10.0, 50.0)
# Fraction of a true box's width/height covered by a partial-object box
PARTIAL_FRACTION = (0.3, 0.8)
# Score drop of a duplicate relative to its parent
DUP_SCORE_DROP = (0.02, 0.2)


@dataclass(frozen=True)
class NoiseConfig:
    box_jitter_sd: float = 1.0
    score_floor: float = 0.7
    score_ceiling: float = 0.99
    occ_noise_sd: float = 0.05
    label_flip_prob: float = 0.0
    confusion_pairs: Tuple[ConfusionPair, ...] = ()
    dup_rate: float = 0.5
    fp_rate: float = 0.5
    fp_score_range: Tuple[float, float] = (0.05, 0.6)
    seed: int = 0

    def __post_init__(self):
        for name in ("box_jitter_sd", "occ_noise_sd", "dup_rate", "fp_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"noise.{name} must be >= 0")
        if not 0.0 <= self.score_floor <= self.score_ceiling <= 1.0:
            raise ConfigError("noise scores need 0 <= score_floor <= score_ceiling <= 1")
        lo, hi = self.fp_score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError("noise.fp_score_range must satisfy 0 <= lo <= hi <= 1")
        if not 0.0 <= self.label_flip_prob <= 1.0:
            raise ConfigError("noise.label_flip_prob must be in [0, 1]")
        for src, dst, p in self.confusion_pairs:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"confusion pair {src}>{dst} has probability {p} outside [0, 1]")

    @classmethod
    def zero(cls, score: float = 0.99, seed: int = 0) -> "NoiseConfig":
        """All noise off: detections lift the ground truth exactly."""
        return cls(
            box_jitter_sd=0.0,
            score_floor=score,
            score_ceiling=score,
            occ_noise_sd=0.0,
            dup_rate=0.0,
            fp_rate=0.0,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def shift_profile(name: str, seed: int = 0) -> NoiseConfig:
    """Named preset: baseline, score_shift or label_shift."""
    if name not in settings.NOISE_PROFILES:
        raise ConfigError(
            f"unknown noise profile '{name}' (expected one of {sorted(settings.NOISE_PROFILES)})"
        )
    preset = dict(settings.NOISE_PROFILES[name])
    preset["confusion_pairs"] = tuple(tuple(p) for p in preset["confusion_pairs"])
    return NoiseConfig(seed=seed, **preset)


def _clamp01(value: float) -> float:
    return float(min(max(value, 0.0), 1.0))


def _jitter_box(box: BoundingBox, sd: float, rng: np.random.Generator) -> BoundingBox:
    if sd == 0.0:
        return box
    x0, y0, x1, y1 = np.asarray(box.to_list()) + rng.normal(0.0, sd, size=4)
    x1 = max(x1, x0 + 1.0)
    y1 = max(y1, y0 + 1.0)
    return BoundingBox(float(x0), float(y0), float(x1), float(y1))


def _relabel(cls: int, cfg: NoiseConfig, rng: np.random.Generator) -> int:
    for src, dst, p in cfg.confusion_pairs:
        if cls == src and rng.random() < p:
            cls = int(dst)
            break
    if cfg.label_flip_prob > 0.0 and rng.random() < cfg.label_flip_prob:
        others = [c for c in settings.SHAPE_CLASSES if c != cls]
        cls = int(rng.choice(others))
    return cls


def _false_positive_box(
    truth: GroundTruth, canvas: Tuple[int, int], rng: np.random.Generator
) -> BoundingBox:
    h, w = canvas
    if rng.random() < 0.5 or not truth.boxes:
        bw, bh = rng.uniform(*FP_BOX_SIDE, size=2)
        x0 = rng.uniform(0.0, w - bw)
        y0 = rng.uniform(0.0, h - bh)
        return BoundingBox(float(x0), float(y0), float(x0 + bw), float(y0 + bh))
    parent = truth.boxes[int(rng.integers(len(truth.boxes)))]
    fw, fh = rng.uniform(*PARTIAL_FRACTION, size=2)
    bw, bh = parent.width * fw, parent.height * fh
    x0 = parent.x_min + rng.uniform(0.0, parent.width - bw)
    y0 = parent.y_min + rng.uniform(0.0, parent.height - bh)
    return BoundingBox(float(x0), float(y0), float(x0 + bw), float(y0 + bh))


def simulate_detections(
    truth: GroundTruth,
    cfg: NoiseConfig,
    rng: Optional[np.random.Generator] = None,
) -> List[Detection]:
    """Noisy candidate detections for one scene, sorted by score descending."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    canvas = truth.amodal_masks[0].shape if truth.amodal_masks else settings.CANVAS_SIZE
    n = len(truth.objects)

    true_dets: List[Detection] = []
    for spec, box in zip(truth.objects, truth.boxes):
        score = cfg.score_ceiling if cfg.score_floor == cfg.score_ceiling else rng.uniform(cfg.score_floor, cfg.score_ceiling)
        occ = 1.0 - spec.depth_rank / n
        if cfg.occ_noise_sd > 0.0:
            occ += rng.normal(0.0, cfg.occ_noise_sd)
        true_dets.append(
            Detection(
                score=float(score),
                box=_jitter_box(box, cfg.box_jitter_sd, rng),
                occ=_clamp01(occ),
                cls=_relabel(spec.cls, cfg, rng),
            )
        )

    duplicates: List[Detection] = []
    n_dup = int(rng.poisson(cfg.dup_rate * n)) if n and cfg.dup_rate > 0 else 0
    for _ in range(n_dup):
        k = int(rng.integers(n))
        parent = true_dets[k]
        occ = parent.occ + (rng.normal(0.0, cfg.occ_noise_sd) if cfg.occ_noise_sd > 0 else 0.0)
        duplicates.append(
            Detection(
                score=_clamp01(parent.score - rng.uniform(*DUP_SCORE_DROP)),
                box=_jitter_box(truth.boxes[k], cfg.box_jitter_sd, rng),
                occ=_clamp01(occ),
                cls=parent.cls,
            )
        )

    false_positives: List[Detection] = []
    n_fp = int(rng.poisson(cfg.fp_rate)) if cfg.fp_rate > 0 else 0
    for _ in range(n_fp):
        false_positives.append(
            Detection(
                score=float(rng.uniform(*cfg.fp_score_range)),
                box=_false_positive_box(truth, canvas, rng),
                occ=float(rng.uniform(0.0, 1.0)),
                cls=int(rng.integers(1, settings.NUM_CLASSES + 1)),
            )
        )

    detections = true_dets + duplicates + false_positives
    result = index_detections(detections)
    logger.debug(
        "Simulated %d detections (%d true, %d duplicates, %d false positives)",
        len(result), len(true_dets), n_dup, n_fp,
    )
    return result


def index_detections(dets: Sequence[Detection]) -> List[Detection]:
    """Sort by score descending (ties by current order) and number them 0..n-1."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    return [dets[i].with_index(pos) for pos, i in enumerate(order)]
