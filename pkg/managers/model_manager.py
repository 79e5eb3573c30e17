"""
Model Manager
=============

Manages the decoder model directory: one `decoder_clsNN.dsam` file and
one `loss_curve_clsNN.csv` per class.
Follows SRP: Only handles model persistence.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from core.decoder import DecoderModel, load_model, save_model
from core.exceptions import ArtifactError
from managers.file_manager import FileManager

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def model_filename(cls: int) -> str:
    return f"decoder_cls{cls:02d}.dsam"


def curve_filename(cls: int) -> str:
    return f"loss_curve_cls{cls:02d}.csv"


class ModelManager:
    """
    Manager responsible for decoder model files.

    Follows SRP: Only handles model file I/O.
    """

    def __init__(self, directory: PathLike, file_manager: FileManager = None):
        """
        Initialize model manager.

        Args:
            directory: Model directory
            file_manager: File manager instance
        """
        self.directory = Path(directory)
        self.file_manager = file_manager or FileManager()

    def model_path(self, cls: int) -> Path:
        return self.directory / model_filename(cls)

    def curve_path(self, cls: int) -> Path:
        return self.directory / curve_filename(cls)

    def save(self, model: DecoderModel, loss_curve: Sequence[float]) -> Path:
        """
        Save a model and its loss curve.

        Args:
            model: Trained decoder
            loss_curve: Mean loss per epoch

        Returns:
            Path of the model file
        """
        self.file_manager.ensure_directory(self.directory)
        path = save_model(model, self.model_path(model.cls))
        frame = pd.DataFrame({"epoch": range(1, len(loss_curve) + 1), "mean_loss": list(loss_curve)})
        frame.to_csv(self.curve_path(model.cls), index=False)
        logger.debug("Saved class %d decoder to %s", model.cls, path)
        return path

    def load(self, cls: int) -> DecoderModel:
        path = self.file_manager.require_file(self.model_path(cls), step="train-decoder")
        return load_model(path)

    def load_curve(self, cls: int) -> List[float]:
        path = self.file_manager.require_file(self.curve_path(cls), step="train-decoder")
        return pd.read_csv(path)["mean_loss"].tolist()

    def available_classes(self) -> List[int]:
        classes = []
        for path in self.file_manager.list_files(self.directory, "decoder_cls*.dsam"):
            try:
                classes.append(int(path.stem.replace("decoder_cls", "")))
            except ValueError:
                logger.warning("Ignoring unexpected model file %s", path.name)
        return classes

    def load_all(self, classes: Optional[Iterable[int]] = None) -> Dict[int, DecoderModel]:
        """
        Load decoders.

        Args:
            classes: Classes that must be present (default: every file found)

        Returns:
            Mapping of class id to model
        """
        if classes is None:
            found = self.available_classes()
            if not found:
                raise ArtifactError(f"no decoder models in {self.directory}", step="train-decoder")
            return {cls: self.load(cls) for cls in found}
        return {cls: self.load(cls) for cls in classes}
