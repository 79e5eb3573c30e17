"""
Selection
=========

Likelihood-driven detection selection.

An interpretation (ordered detection subset) is scored by

    L = ||I - canvas||^2 + lambda * k + sigma^2 * sum_j (||mu_j||^2 + sum tau_j^2 - 2 sum log tau_j)

where the canvas is the whole reconstruction of the subset. Candidates are
visited by descending objectness; each step keeps the current subset, adds
the candidate, or swaps it for the selected detection it overlaps most,
whichever has the lowest loss (ties prefer keep, then add).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core import settings
from core.decoder import DecoderModel
from core.exceptions import ArtifactError, ConfigError, SelectionError, ShapeError
from core.geometry import Detection, iou
from core.reconstruction import ReconCache, ReconConfig, WholeRecon, whole_reconstruction

logger = logging.getLogger(__name__)

CACHE_MODES = ("reuse", "invalidate")
CompetitionPair = Tuple[int, int]


@dataclass(frozen=True)
class DsaConfig:
    lam: float = 20.0
    sigma: float = settings.SIGMA
    min_objectness: float = settings.MIN_OBJECTNESS
    competition_pairs: Tuple[CompetitionPair, ...] = ()
    cache_mode: str = "reuse"
    recon: ReconConfig = field(default_factory=ReconConfig)

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"dsa.lam must be >= 0, got {self.lam}")
        if not 0.0 <= self.min_objectness <= 1.0:
            raise ConfigError(f"dsa.min_objectness must be in [0, 1], got {self.min_objectness}")
        if self.cache_mode not in CACHE_MODES:
            raise ConfigError(f"dsa.cache_mode must be one of {CACHE_MODES}, got '{self.cache_mode}'")
        if self.sigma != self.recon.sigma:
            raise ConfigError(f"dsa.sigma ({self.sigma}) must equal recon.sigma ({self.recon.sigma})")


@dataclass(frozen=True)
class InterpretationLoss:
    recon_term: float
    count_term: float
    kl_term: float

    @property
    def total(self) -> float:
        return self.recon_term + self.count_term + self.kl_term

    def to_dict(self) -> Dict[str, float]:
        return {
            "total": self.total,
            "recon": self.recon_term,
            "count": self.count_term,
            "kl": self.kl_term,
        }


def _finite_or_none(value: float) -> Optional[float]:
    return None if math.isinf(value) else float(value)


@dataclass
class StepRecord:
    step: int
    candidate: int
    cls: int
    loss_prev: float
    loss_add: float
    loss_swap: float
    action: str
    dropped: Optional[int] = None
    relabeled_from: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            "step": self.step,
            "candidate": self.candidate,
            "cls": self.cls,
            "L_prev": _finite_or_none(self.loss_prev),
            "L_add": _finite_or_none(self.loss_add),
            "L_swap": _finite_or_none(self.loss_swap),
            "action": self.action,
            "dropped": self.dropped,
            "relabeled_from": self.relabeled_from,
        }


@dataclass
class Interpretation:
    selected: List[Detection]
    cache: ReconCache
    loss: InterpretationLoss
    canvas: np.ndarray
    owner: np.ndarray
    log: List[StepRecord] = field(default_factory=list)


# ==============================================================================
# PROBABILISTIC TERMS
# ==============================================================================

def count_prior_log(k: int, lambda0: float) -> float:
    """log p(k) for p(k) = (1 - e^-lambda0) e^(-lambda0 k), k >= 0."""
    if lambda0 <= 0:
        raise ConfigError(f"lambda0 must be > 0, got {lambda0}")
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    return -lambda0 * k + math.log1p(-math.exp(-lambda0))


def image_nll(image: np.ndarray, canvas: np.ndarray, sigma: float) -> float:
    """Negative log-likelihood of the image under N(canvas, sigma^2) per channel."""
    if image.shape != canvas.shape:
        raise ShapeError(f"image {image.shape} and canvas {canvas.shape} differ in shape")
    residual = image - canvas
    return 0.5 * image.size * math.log(2.0 * math.pi * sigma * sigma) + float(np.sum(residual * residual)) / (2.0 * sigma * sigma)


def _loss_terms(image: np.ndarray, whole: WholeRecon, subset: Sequence[Detection], cfg: DsaConfig) -> InterpretationLoss:
    residual = image - whole.canvas
    kl = 0.0
    for det in subset:
        post = whole.cache.get(det.key).posterior
        kl += float(np.sum(post.mu ** 2) + np.sum(np.exp(2.0 * post.log_tau)) - 2.0 * np.sum(post.log_tau))
    return InterpretationLoss(
        recon_term=float(np.sum(residual * residual)),
        count_term=cfg.lam * len(subset),
        kl_term=cfg.sigma * cfg.sigma * kl,
    )


def evaluate_subset(
    image: np.ndarray,
    subset: Sequence[Detection],
    cache: ReconCache,
    models: Mapping[int, DecoderModel],
    cfg: DsaConfig,
) -> Tuple[InterpretationLoss, WholeRecon]:
    """Whole reconstruction of a subset and its loss. Invalidate mode ignores `cache`."""
    if cfg.cache_mode == "invalidate":
        cache = ReconCache()
    whole = whole_reconstruction(subset, cache, image, models, cfg.recon)
    return _loss_terms(image, whole, subset, cfg), whole


def interpretation_loss(
    image: np.ndarray,
    subset: Sequence[Detection],
    cache: ReconCache,
    models: Mapping[int, DecoderModel],
    cfg: DsaConfig,
) -> InterpretationLoss:
    loss, _ = evaluate_subset(image, subset, cache, models, cfg)
    return loss


# ==============================================================================
# CLASS COMPETITION
# ==============================================================================

def _rivals(cls: int, cfg: DsaConfig) -> List[int]:
    return [dst for src, dst in cfg.competition_pairs if src == cls]


def resolve_label(
    image: np.ndarray,
    det: Detection,
    context: Sequence[Detection],
    cache: ReconCache,
    models: Mapping[int, DecoderModel],
    cfg: DsaConfig,
) -> Detection:
    """Label of `det` (its own or a rival) giving the lowest loss of context + det."""
    rivals = _rivals(det.cls, cfg)
    if not rivals:
        return det
    for cls in rivals:
        if cls not in models:
            raise ArtifactError(f"class competition needs a decoder for class {cls}", step="train-decoder")
    best = det
    best_loss = interpretation_loss(image, list(context) + [det], cache, models, cfg).total
    for cls in rivals:
        candidate = det.with_label(cls)
        loss = interpretation_loss(image, list(context) + [candidate], cache, models, cfg).total
        if loss < best_loss:
            best, best_loss = candidate, loss
    return best


def class_competition(
    image: np.ndarray,
    dets: Sequence[Detection],
    models: Mapping[int, DecoderModel],
    cfg: DsaConfig,
    cache: Optional[ReconCache] = None,
) -> List[Detection]:
    """Relabel each detection whose class has rivals, all other detections fixed."""
    if not cfg.competition_pairs:
        return list(dets)
    cache = cache if cache is not None else ReconCache()
    current = list(dets)
    for i, det in enumerate(current):
        context = current[:i] + current[i + 1:]
        current[i] = resolve_label(image, det, context, cache, models, cfg)
    return current


# ==============================================================================
# GREEDY SEARCH
# ==============================================================================

def swap_target(det: Detection, selected: Sequence[Detection]) -> Optional[Detection]:
    """Selected detection with the highest IoU against det (lowest index on ties), if IoU > 0."""
    best, best_iou = None, 0.0
    for other in sorted(selected, key=lambda d: d.index):
        overlap = iou(other.box, det.box)
        if overlap > best_iou:
            best, best_iou = other, overlap
    return best


def greedy_select(
    image: np.ndarray,
    dets: Sequence[Detection],
    models: Mapping[int, DecoderModel],
    cfg: DsaConfig,
    cache: Optional[ReconCache] = None,
) -> Interpretation:
    """One-step-back greedy selection over detections sorted by objectness."""
    candidates = sorted(
        (d for d in dets if d.score >= cfg.min_objectness), key=lambda d: (-d.score, d.index)
    )
    cache = cache if cache is not None else ReconCache()
    selected: List[Detection] = []
    loss_prev = math.inf
    state: Optional[Tuple[InterpretationLoss, WholeRecon]] = None
    log: List[StepRecord] = []

    for step, det in enumerate(candidates, start=1):
        original_cls = det.cls
        before = loss_prev
        if cfg.competition_pairs:
            det = resolve_label(image, det, selected, cache, models, cfg)

        add_state = evaluate_subset(image, selected + [det], cache, models, cfg)
        loss_add = add_state[0].total

        loss_swap, swap_state, dropped = math.inf, None, swap_target(det, selected)
        if dropped is not None:
            swapped = [d for d in selected if d.index != dropped.index] + [det]
            swap_state = evaluate_subset(image, swapped, cache, models, cfg)
            loss_swap = swap_state[0].total

        if math.isnan(loss_add) or math.isnan(loss_swap):
            raise SelectionError(f"step {step}: non-finite loss for candidate {det.index} (add={loss_add}, swap={loss_swap})")

        if loss_prev <= loss_add and loss_prev <= loss_swap:
            action = "keep"
        elif loss_add <= loss_swap:
            action = "add"
            selected = selected + [det]
            loss_prev, state = loss_add, add_state
        else:
            action = "swap"
            selected = [d for d in selected if d.index != dropped.index] + [det]
            loss_prev, state = loss_swap, swap_state

        if not math.isinf(before) and loss_prev > before:
            raise SelectionError(f"step {step}: loss rose from {before} to {loss_prev}")

        log.append(
            StepRecord(
                step=step,
                candidate=det.index,
                cls=det.cls,
                loss_prev=before,
                loss_add=loss_add,
                loss_swap=loss_swap,
                action=action,
                dropped=dropped.index if dropped is not None else None,
                relabeled_from=original_cls if det.cls != original_cls else None,
            )
        )
        logger.debug("step %d candidate %d: %s (L=%.3f)", step, det.index, action, loss_prev)

    if state is None:
        canvas = np.zeros_like(image, dtype=np.float64)
        loss = InterpretationLoss(float(np.sum(image * image)), 0.0, 0.0)
        return Interpretation([], cache, loss, canvas, np.full(image.shape[:2], -1, dtype=np.int64), log)
    loss, whole = state
    return Interpretation(selected, whole.cache, loss, whole.canvas, whole.owner, log)
