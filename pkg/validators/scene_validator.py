"""
scene_validator.py

Checks a rendered scene against its ground truth in three stages:
1. Mask checks - visible masks disjoint, visible inside amodal, enough visible pixels
2. Colour check - r + g + b >= 1
3. Image check - non-black pixels are exactly the union of visible masks
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from core import settings
from core.geometry import blank_mask
from core.scene_builder import GroundTruth, Scene

logger = logging.getLogger(__name__)


class ValidationResult:
    """Holds validation results for a single scene."""

    def __init__(self, scene_id: str):
        self.scene_id = scene_id
        self.mask_passed = False
        self.mask_errors: List[str] = []
        self.color_passed = False
        self.color_errors: List[str] = []
        self.image_passed = False
        self.image_errors: List[str] = []

    def is_valid(self) -> bool:
        """Returns True if the scene passed all validation stages."""
        return self.mask_passed and self.color_passed and self.image_passed

    @property
    def errors(self) -> List[str]:
        return self.mask_errors + self.color_errors + self.image_errors

    def total_errors(self) -> int:
        return len(self.errors)


class SceneValidator:
    """Runs mask, colour and image checks on rendered scenes."""

    def __init__(self, min_visible: int = settings.MIN_VISIBLE_PIXELS):
        """
        Initialize scene validator.

        Args:
            min_visible: Minimum visible pixel count per object
        """
        self.min_visible = min_visible

    def validate(self, scene_id: str, image: np.ndarray, truth: GroundTruth) -> ValidationResult:
        """
        Run all stages on one rendered scene.

        Args:
            scene_id: Identifier used in messages
            image: Rendered (H, W, 3) image
            truth: Its ground truth

        Returns:
            ValidationResult object
        """
        result = ValidationResult(scene_id)
        result.mask_errors = self._check_masks(truth)
        result.mask_passed = not result.mask_errors
        result.color_errors = self._check_color(truth)
        result.color_passed = not result.color_errors
        result.image_errors = self._check_image(image, truth)
        result.image_passed = not result.image_errors
        if not result.is_valid():
            logger.debug("Scene %s failed validation: %s", scene_id, result.errors)
        return result

    def validate_scene(self, scene: Scene, min_visible: Optional[int] = None) -> ValidationResult:
        image, truth = scene.render()
        if min_visible is not None and min_visible != self.min_visible:
            return SceneValidator(min_visible).validate(scene.scene_id, image, truth)
        return self.validate(scene.scene_id, image, truth)

    def validate_all(self, scenes: Sequence[Scene]) -> Dict[str, ValidationResult]:
        return {scene.scene_id: self.validate_scene(scene) for scene in scenes}

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def _check_masks(self, truth: GroundTruth) -> List[str]:
        errors = []
        if len(truth.visible_masks) != len(truth.objects) or len(truth.amodal_masks) != len(truth.objects):
            return [f"{len(truth.objects)} objects but {len(truth.visible_masks)} visible / "
                    f"{len(truth.amodal_masks)} amodal masks"]
        stacked = np.stack(truth.visible_masks).astype(np.int64)
        overlap = int(np.count_nonzero(stacked.sum(axis=0) > 1))
        if overlap:
            errors.append(f"visible masks overlap on {overlap} pixels")
        for i, (vis, amodal) in enumerate(zip(truth.visible_masks, truth.amodal_masks)):
            outside = int(np.count_nonzero(vis & ~amodal))
            if outside:
                errors.append(f"object {i}: {outside} visible pixels outside its amodal mask")
            count = int(vis.sum())
            if count < self.min_visible:
                errors.append(f"object {i}: {count} visible pixels (minimum {self.min_visible})")
        return errors

    def _check_color(self, truth: GroundTruth) -> List[str]:
        total = float(sum(truth.color))
        if total < 1.0:
            return [f"colour {tuple(truth.color)} sums to {total:.3f} (< 1)"]
        return []

    def _check_image(self, image: np.ndarray, truth: GroundTruth) -> List[str]:
        visible = np.any(np.stack(truth.visible_masks), axis=0)
        lit = ~blank_mask(image)
        mismatch = int(np.count_nonzero(visible != lit))
        if mismatch:
            return [f"{mismatch} pixels where non-black does not match the visible union"]
        return []
