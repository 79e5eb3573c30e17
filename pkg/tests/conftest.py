"""Shared fixtures: hand-placed scenes, template decoders and artifact roots."""

from typing import Dict, Iterable, Sequence, Tuple

import numpy as np
import pytest

from core.decoder import DecoderModel, TrainConfig, svi_train
from core.geometry import Detection
from core.reconstruction import ReconConfig
from core.scene_builder import ObjectSpec, Scene, centered_spec, object_extent, render_scene
from core.selection import DsaConfig

COLOR = (0.9, 0.6, 0.3)


def make_spec(cls: int, center: Tuple[float, float], depth: int = 0, scale: float = 1.0, rotation: float = 0.0) -> ObjectSpec:
    return ObjectSpec(cls, center, scale, rotation, depth)


def make_scene(specs: Sequence[ObjectSpec], scene_id: str = "scene-00000", color=COLOR) -> Scene:
    return Scene(scene_id, tuple(specs), tuple(color))


def truth_detections(scene: Scene, score: float = 0.95) -> list:
    """One exact detection per object; front objects get the higher occlusion score."""
    _, truth = scene.render()
    n = len(truth.objects)
    dets = [
        Detection(score=score - 0.01 * i, box=box, occ=1.0 - spec.depth_rank / n, cls=spec.cls, index=i)
        for i, (spec, box) in enumerate(zip(truth.objects, truth.boxes))
    ]
    return dets


def template_decoder(cls: int, color=COLOR, side: int = None, n_z: int = 4, hidden: int = 1) -> DecoderModel:
    """
    Decoder whose output ignores z and equals a rendered class template.

    With `side` omitted the template frame matches the object's extent at
    scale 1, so reconstructions of unscaled, untilted objects are exact.
    """
    spec = make_spec(cls, (100.0, 100.0))
    if side is None:
        ext = object_extent(spec)
        side = int(round(max(ext.width, ext.height)))
    image, _ = render_scene([centered_spec(spec, side)], color, (side, side))
    p = np.clip(image, 1e-4, 1.0 - 1e-4).ravel()
    logit = np.log(p / (1.0 - p)).astype(np.float32).astype(np.float64)
    out = 3 * side * side
    return DecoderModel(
        cls, n_z, side, hidden,
        W1=np.zeros((n_z, hidden)), b1=np.zeros(hidden), W2=np.zeros((hidden, out)), b2=logit,
    )


def template_decoders(classes: Iterable[int], color=COLOR, side: int = None) -> Dict[int, DecoderModel]:
    return {cls: template_decoder(cls, color, side) for cls in classes}


@pytest.fixture
def fast_recon() -> ReconConfig:
    return ReconConfig(n_iter=20, lr_pose=0.01, seed=3)


@pytest.fixture
def dsa_cfg(fast_recon) -> DsaConfig:
    return DsaConfig(lam=50.0, recon=fast_recon)


@pytest.fixture
def disk_scene() -> Scene:
    return make_scene([make_spec(1, (100.0, 100.0))])


@pytest.fixture
def two_object_scene() -> Scene:
    """A disk partly in front of a square."""
    return make_scene([make_spec(1, (90.0, 100.0), depth=0), make_spec(4, (112.0, 100.0), depth=1)])


@pytest.fixture
def separated_scene() -> Scene:
    return make_scene([make_spec(1, (60.0, 60.0), depth=1), make_spec(4, (140.0, 140.0), depth=0)])


@pytest.fixture(scope="session")
def tiny_trained_decoder() -> Tuple[DecoderModel, np.ndarray]:
    """A small decoder overfit to one 8x8 disk."""
    image, _ = render_scene([centered_spec(make_spec(1, (100.0, 100.0)), 8)], COLOR, (8, 8))
    images = image[None]
    cfg = TrainConfig(epochs=600, batch_size=1, lr_decoder=0.05, lr_latent=0.05, n_z=2, hidden=16, seed=1)
    result = svi_train(images, cfg, cls=1)
    return result.model, images


@pytest.fixture
def artifact_root(tmp_path):
    return tmp_path / "artifacts"
