"""
Generation Service
==================

Orchestrates dataset generation following Single Responsibility Principle.
Only handles generation orchestration - delegates validation and persistence.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from core import settings
from core.detection_simulator import NoiseConfig, simulate_detections
from core.exceptions import GenerationError
from core.geometry import BoundingBox, Detection
from core.run_config import RunConfig
from core.scene_builder import DATASET_KEYS, GroundTruth, Scene, gen_decoder_dataset, gen_eval_sets, gen_pairs_dataset
from core.seeding import derive_rng
from managers.dataset_manager import DatasetManager
from validators.scene_validator import SceneValidator

logger = logging.getLogger(__name__)


@dataclass
class SimulatedScene:
    """A scene with its true labels and boxes and the simulated detections."""

    scene: Scene
    labels: Tuple[int, ...]
    boxes: Tuple[BoundingBox, ...]
    detections: List[Detection]

    @property
    def scene_id(self) -> str:
        return self.scene.scene_id


class GenerationService:
    """
    Service responsible for orchestrating dataset generation.

    Follows SRP: Only handles generation logic, delegates validation and export.
    """

    def __init__(self, validator: SceneValidator = None, dataset_manager: DatasetManager = None):
        """
        Initialize generation service with optional dependencies.

        Args:
            validator: Scene validator (dependency injection)
            dataset_manager: Dataset manager (dependency injection)
        """
        self.validator = validator
        self.dataset_manager = dataset_manager or DatasetManager()

    def _checker(self, min_visible: int):
        validator = self.validator or SceneValidator(min_visible)

        def check(scene: Scene, image: np.ndarray, truth: GroundTruth) -> None:
            result = validator.validate(scene.scene_id, image, truth)
            if not result.is_valid():
                raise GenerationError(f"scene {scene.scene_id} failed validation: {'; '.join(result.errors)}")

        return check

    def generate_all(self, cfg: RunConfig) -> Dict[str, int]:
        """
        Generate and write the pairs, decoder, validation and test sets.

        Args:
            cfg: Resolved run configuration

        Returns:
            Mapping of dataset name to number of entries written
        """
        data = cfg.data
        common = dict(
            canvas=tuple(data.canvas),
            min_visible=data.min_visible,
            min_separation=data.min_separation,
            budget=data.rejection_budget,
        )
        check = self._checker(data.min_visible)
        counts: Dict[str, int] = {}

        pairs = gen_pairs_dataset(cfg.seed, data.scaled_n_per_class, **common)
        counts[settings.PAIRS_SUBDIR] = self.dataset_manager.write_scenes(
            pairs, cfg.run.dataset_dir(settings.PAIRS_SUBDIR), with_images=False, on_render=check
        )

        samples = gen_decoder_dataset(pairs, data.decoder_side)
        counts[settings.DECODER_SUBDIR] = self.dataset_manager.write_decoder_set(
            samples, cfg.run.dataset_dir(settings.DECODER_SUBDIR)
        )

        validation, test = gen_eval_sets(cfg.seed, data.scaled_validation, data.scaled_test, **common)
        counts[settings.VALIDATION_SUBDIR] = self.dataset_manager.write_scenes(
            validation, cfg.run.dataset_dir(settings.VALIDATION_SUBDIR), on_render=check
        )
        counts[settings.TEST_SUBDIR] = self.dataset_manager.write_scenes(
            test, cfg.run.dataset_dir(settings.TEST_SUBDIR), on_render=check
        )
        logger.info("Datasets written to %s: %s", cfg.run.data_dir, counts)
        return counts

    def simulate_set(
        self,
        scenes: Sequence[Scene],
        noise: NoiseConfig,
        seed: int,
        dataset: str,
    ) -> List[SimulatedScene]:
        """
        Simulate detections for every scene of a set.

        Args:
            scenes: Scenes in set order
            noise: Detector noise settings
            seed: Master seed
            dataset: Set name, keys the detector stream

        Returns:
            One SimulatedScene per scene, detections sorted by score
        """
        key = DATASET_KEYS.get(dataset, len(DATASET_KEYS))
        simulated = []
        for i, scene in enumerate(scenes):
            _, truth = scene.render()
            dets = simulate_detections(truth, noise, rng=derive_rng(seed, "detector", key, i))
            simulated.append(SimulatedScene(scene, tuple(truth.labels), tuple(truth.boxes), dets))
        logger.info("Simulated detections for %d %s scenes", len(scenes), dataset)
        return simulated
