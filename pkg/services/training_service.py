"""
Training Service
================

Trains one decoder per shape class and scores them on held-out samples.
Follows SRP: Only handles decoder training orchestration.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from core import settings
from core.decoder import DecoderModel, fit_latents, svi_train
from core.run_config import RunConfig
from core.seeding import derive_rng
from managers.dataset_manager import DatasetManager
from managers.model_manager import ModelManager

logger = logging.getLogger(__name__)

# Held-out images scored per class; discrimination fits every image under every decoder.
MAX_HELD_OUT = 20
EVAL_LATENT_STEPS = 50


@dataclass
class ClassTrainingSummary:
    cls: int
    n_train: int
    n_held_out: int
    first_loss: float
    final_loss: float
    held_out_mse: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "cls": self.cls,
            "n_train": self.n_train,
            "n_held_out": self.n_held_out,
            "first_loss": self.first_loss,
            "final_loss": self.final_loss,
            "held_out_mse": self.held_out_mse,
        }


@dataclass
class TrainingReport:
    classes: List[ClassTrainingSummary] = field(default_factory=list)
    discrimination_rate: Optional[float] = None


def split_indices(n: int, train_fraction: float) -> int:
    """Number of leading samples used for training; the rest are held out."""
    if n <= 1:
        return n
    return min(n - 1, max(1, int(n * train_fraction)))


class TrainingService:
    """
    Service responsible for per-class decoder training.

    Follows SRP: Only handles training logic, delegates persistence.
    """

    def __init__(self, dataset_manager: DatasetManager = None):
        """
        Initialize training service.

        Args:
            dataset_manager: Dataset manager (dependency injection)
        """
        self.dataset_manager = dataset_manager or DatasetManager()

    def train_all(self, cfg: RunConfig, classes: Optional[Sequence[int]] = None) -> TrainingReport:
        """
        Train and save a decoder for each class.

        Args:
            cfg: Resolved run configuration
            classes: Class ids to train (default: all)

        Returns:
            TrainingReport with per-class summaries and the discrimination rate
        """
        decoder_dir = cfg.run.dataset_dir(settings.DECODER_SUBDIR)
        model_manager = ModelManager(cfg.run.models_dir)
        classes = list(classes) if classes is not None else sorted(settings.SHAPE_CLASSES)

        report = TrainingReport()
        models: Dict[int, DecoderModel] = {}
        held_out: Dict[int, np.ndarray] = {}
        for cls in classes:
            images = self.dataset_manager.load_class_images(decoder_dir, cls)
            n_train = split_indices(len(images), cfg.data.train_fraction)
            result = svi_train(images[:n_train], cfg.train, cls, rng=derive_rng(cfg.seed, "training", cls))
            model_manager.save(result.model, result.loss_curve)
            models[cls] = result.model
            held_out[cls] = images[n_train:][:MAX_HELD_OUT]

            summary = ClassTrainingSummary(
                cls=cls,
                n_train=n_train,
                n_held_out=len(images) - n_train,
                first_loss=result.loss_curve[0],
                final_loss=result.loss_curve[-1],
            )
            if len(held_out[cls]):
                fit = fit_latents(
                    result.model, held_out[cls], cfg.train.sigma, EVAL_LATENT_STEPS,
                    rng=derive_rng(cfg.seed, "training", cls, 1),
                )
                summary.held_out_mse = float(np.mean(fit.mse))
            report.classes.append(summary)
            logger.info("Class %d: loss %.2f -> %.2f, held-out mse %s",
                        cls, summary.first_loss, summary.final_loss, summary.held_out_mse)

        report.discrimination_rate = self.discrimination_rate(models, held_out, cfg.train.sigma, cfg.seed)
        return report

    def discrimination_rate(
        self,
        models: Dict[int, DecoderModel],
        held_out: Dict[int, np.ndarray],
        sigma: float = settings.SIGMA,
        seed: int = 0,
    ) -> Optional[float]:
        """
        Fraction of held-out images whose own class decoder fits them best.

        Args:
            models: Decoder per class
            held_out: Held-out images per class
            sigma: Observation noise used in the fit loss
            seed: Master seed

        Returns:
            Rate in [0, 1], or None with fewer than two classes or no images
        """
        if len(models) < 2:
            return None
        hits, total = 0, 0
        for cls, images in held_out.items():
            if not len(images):
                continue
            losses = {
                other: fit_latents(model, images, sigma, EVAL_LATENT_STEPS,
                                   rng=derive_rng(seed, "training", cls, other + 100)).loss
                for other, model in models.items()
            }
            order = sorted(losses)
            table = np.stack([losses[c] for c in order])
            winners = np.array(order)[np.argmin(table, axis=0)]
            hits += int(np.sum(winners == cls))
            total += len(images)
        return hits / total if total else None
