"""
Dataset Manager
===============

Reads and writes scene datasets laid out as

    <dir>/manifest.jsonl        one scene record per line
    <dir>/images/<id>.imgf      lossless float32 image (omitted for pairs)
    <dir>/previews/<id>.png     8-bit preview
    <dir>/masks/<id>.imgf       R = visible owner + 1, G = amodal coverage, B = 0

Follows SRP: Only handles dataset persistence.
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from core import settings
from core.exceptions import ArtifactError, GenerationError
from core.image_io import read_imgf, write_imgf, write_png
from core.scene_builder import DecoderSample, GroundTruth, ObjectSpec, Scene
from managers.file_manager import FileManager
from managers.jsonl_manager import JSONLManager

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def encode_mask(truth: GroundTruth) -> np.ndarray:
    """Pack the visible-owner map and amodal coverage into one RGB array."""
    owner = truth.owner_map()
    mask = np.zeros(owner.shape + (3,), dtype=np.float32)
    mask[..., 0] = owner + 1
    mask[..., 1] = truth.coverage()
    return mask


def decode_owner(mask: np.ndarray) -> np.ndarray:
    return np.rint(mask[..., 0]).astype(np.int64) - 1


class DatasetManager:
    """
    Manager responsible for dataset directories.

    Follows SRP: Only handles dataset file I/O.
    """

    def __init__(self, jsonl_manager: JSONLManager = None, file_manager: FileManager = None):
        """
        Initialize dataset manager.

        Args:
            jsonl_manager: JSONL manager instance
            file_manager: File manager instance
        """
        self.jsonl_manager = jsonl_manager or JSONLManager()
        self.file_manager = file_manager or FileManager()

    # ==============================================================================
    # SCENE SETS
    # ==============================================================================

    def write_scenes(
        self,
        scenes: Sequence[Scene],
        directory: PathLike,
        with_images: bool = True,
        on_render: Optional[Callable[[Scene, np.ndarray, GroundTruth], None]] = None,
    ) -> int:
        """
        Write a scene set.

        Args:
            scenes: Scenes to write
            directory: Dataset directory (replaced if present)
            with_images: Also store the lossless image
            on_render: Called with every rendered scene before it is written

        Returns:
            Number of scenes written
        """
        root = self.file_manager.reset_directory(directory)
        for sub in ("previews", "masks") + (("images",) if with_images else ()):
            self.file_manager.ensure_directory(root / sub)

        records = []
        for scene in scenes:
            image, truth = scene.render()
            if on_render is not None:
                on_render(scene, image, truth)
            record = scene.to_dict()
            record["boxes"] = [box.to_list() for box in truth.boxes]
            record["preview"] = f"previews/{scene.scene_id}.png"
            record["mask"] = f"masks/{scene.scene_id}.imgf"
            write_png(image, root / record["preview"])
            write_imgf(encode_mask(truth), root / record["mask"])
            if with_images:
                record["image"] = f"images/{scene.scene_id}.imgf"
                write_imgf(image, root / record["image"])
            records.append(record)

        self.jsonl_manager.write_jsonl(records, root / settings.MANIFEST_NAME)
        logger.info("Wrote %d scenes to %s", len(records), root)
        return len(records)

    def load_scenes(self, directory: PathLike, verify: bool = True, step: str = "gen-data") -> List[Scene]:
        """
        Load a scene set from its manifest.

        Args:
            directory: Dataset directory
            verify: Re-render each scene and compare with the stored owner map
            step: CLI step named when the dataset is missing

        Returns:
            Scenes in manifest order
        """
        root = Path(directory)
        manifest = self.file_manager.require_file(root / settings.MANIFEST_NAME, step=step)
        scenes = []
        for record in self.jsonl_manager.read_jsonl(manifest):
            scene = Scene.from_dict(record)
            if verify:
                self._verify(scene, root / record["mask"])
            scenes.append(scene)
        logger.debug("Loaded %d scenes from %s", len(scenes), root)
        return scenes

    def load_image(self, directory: PathLike, scene: Scene) -> np.ndarray:
        """Stored lossless image, or a re-render when the set keeps none."""
        path = Path(directory) / "images" / f"{scene.scene_id}.imgf"
        if path.is_file():
            return read_imgf(path)
        image, _ = scene.render()
        return image

    def _verify(self, scene: Scene, mask_path: Path) -> None:
        if not mask_path.is_file():
            raise ArtifactError(f"missing mask {mask_path}", step="gen-data")
        _, truth = scene.render()
        if not np.array_equal(decode_owner(read_imgf(mask_path)), truth.owner_map()):
            raise GenerationError(f"scene {scene.scene_id} does not re-render to its stored mask")

    # ==============================================================================
    # DECODER SET
    # ==============================================================================

    def write_decoder_set(self, samples: Sequence[DecoderSample], directory: PathLike) -> int:
        """
        Write the isolated-object set used for decoder training.

        Args:
            samples: Decoder samples
            directory: Target directory (replaced if present)

        Returns:
            Number of samples written
        """
        root = self.file_manager.reset_directory(directory)
        self.file_manager.ensure_directory(root / "images")
        records = []
        for sample in samples:
            image_rel = f"images/{sample.sample_id}.imgf"
            write_imgf(sample.render(), root / image_rel)
            records.append({
                "id": sample.sample_id,
                "cls": sample.cls,
                "source_scene": sample.source_scene,
                "spec": sample.spec.to_dict(),
                "color": [float(c) for c in sample.color],
                "side": sample.side,
                "image": image_rel,
            })
        self.jsonl_manager.write_jsonl(records, root / settings.MANIFEST_NAME)
        logger.info("Wrote %d decoder samples to %s", len(records), root)
        return len(records)

    def load_decoder_set(self, directory: PathLike) -> List[DecoderSample]:
        root = Path(directory)
        manifest = self.file_manager.require_file(root / settings.MANIFEST_NAME, step="gen-data")
        return [
            DecoderSample(
                sample_id=r["id"],
                cls=int(r["cls"]),
                source_scene=r["source_scene"],
                spec=ObjectSpec.from_dict(r["spec"]),
                color=tuple(float(c) for c in r["color"]),
                side=int(r["side"]),
            )
            for r in self.jsonl_manager.read_jsonl(manifest)
        ]

    def load_class_images(self, directory: PathLike, cls: int) -> np.ndarray:
        """
        Stack the stored images of one class.

        Args:
            directory: Decoder set directory
            cls: Class id

        Returns:
            Array of shape (N, d, d, 3) in manifest order
        """
        root = Path(directory)
        manifest = self.file_manager.require_file(root / settings.MANIFEST_NAME, step="gen-data")
        paths = [root / r["image"] for r in self.jsonl_manager.read_jsonl(manifest) if int(r["cls"]) == cls]
        if not paths:
            raise ArtifactError(f"no decoder samples for class {cls} in {root}", step="gen-data")
        return np.stack([read_imgf(p) for p in paths])
