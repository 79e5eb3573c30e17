"""
Postprocess Service
===================

Dispatches one post-processing method over the detections of an image.
Follows SRP: Only handles method selection and wiring, never I/O.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Mapping, Optional, Sequence

import numpy as np

from core import settings
from core.decoder import DecoderModel
from core.exceptions import ArtifactError, ConfigError
from core.geometry import Detection
from core.reconstruction import ReconCache
from core.selection import DsaConfig, Interpretation, greedy_select
from core.suppression import NmsConfig, diou_nms, nms, soft_nms, threshold_select

logger = logging.getLogger(__name__)

COMPETITION_METHOD = "nms+dsa+competition"
METHODS = settings.ALL_METHODS + (COMPETITION_METHOD,)


def is_dsa_method(method: str) -> bool:
    return "+dsa" in method


@dataclass
class PostprocessResult:
    method: str
    selected: List[Detection]
    interpretation: Optional[Interpretation] = None
    decisions: List[dict] = field(default_factory=list)


class PostprocessService:
    """
    Service responsible for running NMS baselines and DSA combinations.

    Follows SRP: Only handles post-processing dispatch.
    """

    def __init__(
        self,
        nms_cfg: NmsConfig = NmsConfig(),
        dsa_cfg: DsaConfig = DsaConfig(),
        models: Optional[Mapping[int, DecoderModel]] = None,
        dsa_nms_nt: float = settings.DSA_NMS_THRESHOLD,
    ):
        """
        Initialize postprocess service.

        Args:
            nms_cfg: Baseline suppression settings
            dsa_cfg: Selection settings
            models: Decoder per class (required by DSA methods)
            dsa_nms_nt: Overlap threshold of the suppression run before DSA
        """
        self.nms_cfg = nms_cfg
        self.dsa_cfg = dsa_cfg
        self.models = dict(models or {})
        self.dsa_nms_nt = dsa_nms_nt

    @staticmethod
    def validate_method(method: str) -> str:
        if method not in METHODS:
            raise ConfigError(f"unknown method '{method}' (expected one of {list(METHODS)})")
        return method

    def suppress(self, method: str, dets: Sequence[Detection]) -> List[Detection]:
        """
        Suppression stage of a method.

        Baselines use the configured nt; methods feeding DSA use the
        pre-selection threshold.

        Args:
            method: Method name
            dets: Candidate detections

        Returns:
            Surviving (or rescored) detections
        """
        self.validate_method(method)
        base = method.split("+", 1)[0]
        nt = self.dsa_nms_nt if is_dsa_method(method) else self.nms_cfg.nt
        if base == "nms":
            return nms(dets, nt, self.nms_cfg.per_class)
        if base == "diou-nms":
            return diou_nms(dets, nt, self.nms_cfg.per_class)
        return soft_nms(dets, replace(self.nms_cfg, nt=nt))

    def dsa_config(self, method: str, lam: Optional[float] = None) -> DsaConfig:
        cfg = self.dsa_cfg if lam is None else replace(self.dsa_cfg, lam=lam)
        if method != COMPETITION_METHOD and cfg.competition_pairs:
            cfg = replace(cfg, competition_pairs=())
        return cfg

    def select(
        self,
        method: str,
        image: np.ndarray,
        suppressed: Sequence[Detection],
        threshold: Optional[float] = None,
        lam: Optional[float] = None,
        cache: Optional[ReconCache] = None,
    ) -> PostprocessResult:
        """
        Selection stage: score threshold for baselines, DSA otherwise.

        Args:
            method: Method name
            image: Scene image (DSA only)
            suppressed: Output of `suppress`
            threshold: Final score threshold for baselines (None keeps all)
            lam: Count penalty override for DSA
            cache: Shared reconstruction cache for DSA

        Returns:
            PostprocessResult
        """
        if not is_dsa_method(method):
            selected = list(suppressed) if threshold is None else threshold_select(suppressed, threshold)
            return PostprocessResult(method, selected)

        if not self.models:
            raise ArtifactError("DSA methods need decoder models", step="train-decoder")
        interpretation = greedy_select(image, suppressed, self.models, self.dsa_config(method, lam), cache=cache)
        return PostprocessResult(
            method,
            list(interpretation.selected),
            interpretation,
            [record.to_dict() for record in interpretation.log],
        )

    def run(
        self,
        method: str,
        image: np.ndarray,
        dets: Sequence[Detection],
        threshold: Optional[float] = None,
        lam: Optional[float] = None,
    ) -> PostprocessResult:
        """Suppression followed by selection for one image."""
        suppressed = self.suppress(method, dets)
        result = self.select(method, image, suppressed, threshold=threshold, lam=lam)
        logger.debug("%s kept %d of %d detections", method, len(result.selected), len(dets))
        return result
