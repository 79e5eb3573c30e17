"""
Scene Builder
=============

Procedural 2D shape scenes: rendering, ground truth and the dataset protocol
(pairs / decoder / validation / test sets) plus the rotate and enlarge
perturbations applied to test sets.

Scenes are stored as specs (classes, placements, colour) and rendered on
demand; the renderer is deterministic, so a spec list always reproduces
the same raster bit for bit.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from core import settings
from core.exceptions import GenerationError
from core.geometry import BoundingBox, tight_box
from core.seeding import derive_rng

logger = logging.getLogger(__name__)

RGB = Tuple[float, float, float]
Canvas = Tuple[int, int]

# Second key of the "dataset" random stream, one per generated set.
DATASET_KEYS = {"pairs": 0, "decoder": 1, "validation": 2, "test": 3}


# ==============================================================================
# TYPES
# ==============================================================================

@dataclass(frozen=True)
class ObjectSpec:
    """One object placement. depth_rank 0 is frontmost."""

    cls: int
    center: Tuple[float, float]
    scale: float
    rotation: float
    depth_rank: int

    def __post_init__(self):
        if self.cls not in settings.SHAPE_CLASSES:
            raise GenerationError(f"unknown shape class {self.cls}")
        if self.scale <= 0:
            raise GenerationError(f"scale must be > 0, got {self.scale}")

    def to_dict(self) -> Dict:
        return {
            "cls": int(self.cls),
            "center": [float(self.center[0]), float(self.center[1])],
            "scale": float(self.scale),
            "rotation": float(self.rotation),
            "depth_rank": int(self.depth_rank),
        }

    @classmethod
    def from_dict(cls, record: Dict) -> "ObjectSpec":
        return cls(
            cls=int(record["cls"]),
            center=(float(record["center"][0]), float(record["center"][1])),
            scale=float(record["scale"]),
            rotation=float(record["rotation"]),
            depth_rank=int(record["depth_rank"]),
        )


@dataclass
class GroundTruth:
    objects: List[ObjectSpec]
    color: RGB
    amodal_masks: List[np.ndarray]
    visible_masks: List[np.ndarray]
    boxes: List[BoundingBox]

    @property
    def labels(self) -> List[int]:
        return [spec.cls for spec in self.objects]

    def visible_counts(self) -> List[int]:
        return [int(m.sum()) for m in self.visible_masks]

    def owner_map(self) -> np.ndarray:
        """Per pixel, the index of the object visible there (-1 for background)."""
        owner = np.full(self.amodal_masks[0].shape, -1, dtype=np.int64)
        for i, mask in enumerate(self.visible_masks):
            owner[mask] = i
        return owner

    def coverage(self) -> np.ndarray:
        """Number of amodal masks covering each pixel."""
        return np.sum(np.stack(self.amodal_masks), axis=0)


@dataclass(frozen=True)
class Scene:
    """
    A dataset entry. `window` = (x0, y0, side) marks an enlarged scene: the
    rendered canvas is cropped at that square and resampled back to full size.
    """

    scene_id: str
    objects: Tuple[ObjectSpec, ...]
    color: RGB
    canvas: Canvas = settings.CANVAS_SIZE
    window: Optional[Tuple[int, int, int]] = None

    @property
    def labels(self) -> List[int]:
        return [spec.cls for spec in self.objects]

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    def render(self) -> Tuple[np.ndarray, GroundTruth]:
        image, truth = render_scene(self.objects, self.color, self.canvas)
        if self.window is not None:
            image, truth = _resample_window(image, truth, self.window)
        return image, truth

    def to_dict(self) -> Dict:
        record = {
            "id": self.scene_id,
            "objects": [spec.to_dict() for spec in self.objects],
            "color": [float(c) for c in self.color],
            "canvas": [int(self.canvas[0]), int(self.canvas[1])],
        }
        if self.window is not None:
            record["window"] = [int(v) for v in self.window]
        return record

    @classmethod
    def from_dict(cls, record: Dict) -> "Scene":
        window = record.get("window")
        return cls(
            scene_id=str(record["id"]),
            objects=tuple(ObjectSpec.from_dict(o) for o in record["objects"]),
            color=tuple(float(c) for c in record["color"]),
            canvas=tuple(int(v) for v in record.get("canvas", settings.CANVAS_SIZE)),
            window=tuple(int(v) for v in window) if window else None,
        )


@dataclass(frozen=True)
class DecoderSample:
    """One isolated, centred, rescaled object for decoder training."""

    sample_id: str
    cls: int
    source_scene: str
    spec: ObjectSpec
    color: RGB
    side: int = settings.DECODER_SIDE

    def render(self) -> np.ndarray:
        image, _ = render_scene([self.spec], self.color, (self.side, self.side))
        return image


# ==============================================================================
# RASTERIZATION
# ==============================================================================

def object_tilt(spec: ObjectSpec) -> float:
    """In-plane tilt (radians) of a spin angle; 0 for rotation-invariant classes."""
    if settings.SHAPE_CLASSES[spec.cls]["rotation_invariant"]:
        return 0.0
    return math.radians(settings.MAX_TILT_DEGREES * math.sin(math.radians(spec.rotation)))


def _half_size(spec: ObjectSpec) -> Tuple[float, float]:
    hx, hy = settings.SHAPE_CLASSES[spec.cls]["half_size"]
    return hx * spec.scale, hy * spec.scale


def object_extent(spec: ObjectSpec) -> BoundingBox:
    """Continuous axis-aligned extent of the tilted shape."""
    kind = settings.SHAPE_CLASSES[spec.cls]["kind"]
    hx, hy = _half_size(spec)
    t = object_tilt(spec)
    c, s = math.cos(t), math.sin(t)
    cx, cy = spec.center
    if kind in ("ellipse", "annulus"):
        ex = math.hypot(hx * c, hy * s)
        ey = math.hypot(hx * s, hy * c)
        return BoundingBox(cx - ex, cy - ey, cx + ex, cy + ey)
    if kind == "rectangle":
        local = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    else:
        local = [(0.0, -hy), (-hx, hy), (hx, hy)]
    xs = [cx + u * c - v * s for u, v in local]
    ys = [cy + u * s + v * c for u, v in local]
    return BoundingBox(min(xs), min(ys), max(xs), max(ys))


def rasterize_object(spec: ObjectSpec, canvas: Canvas) -> Tuple[np.ndarray, np.ndarray]:
    """
    Amodal mask and shading of one object on a canvas.

    Pixels are sampled at their centres. Shading follows the class profile
    floor + (1 - floor) * (1 - rho ** power) with rho the normalized radius
    in the object frame.
    """
    h, w = canvas
    mask = np.zeros((h, w), dtype=bool)
    shade = np.zeros((h, w), dtype=np.float64)

    ext = object_extent(spec)
    x0, y0 = max(int(math.floor(ext.x_min)) - 1, 0), max(int(math.floor(ext.y_min)) - 1, 0)
    x1, y1 = min(int(math.ceil(ext.x_max)) + 1, w), min(int(math.ceil(ext.y_max)) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return mask, shade

    info = settings.SHAPE_CLASSES[spec.cls]
    hx, hy = _half_size(spec)
    t = object_tilt(spec)
    c, s = math.cos(t), math.sin(t)
    xs, ys = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    dx, dy = xs - spec.center[0], ys - spec.center[1]
    u = c * dx + s * dy
    v = -s * dx + c * dy

    kind = info["kind"]
    if kind == "ellipse":
        rho = np.sqrt((u / hx) ** 2 + (v / hy) ** 2)
        inside = rho <= 1.0
    elif kind == "annulus":
        inner = info["inner_ratio"]
        radial = np.sqrt((u / hx) ** 2 + (v / hy) ** 2)
        inside = (radial >= inner) & (radial <= 1.0)
        rho = np.abs(2.0 * radial - (1.0 + inner)) / (1.0 - inner)
    elif kind == "rectangle":
        rho = np.maximum(np.abs(u) / hx, np.abs(v) / hy)
        inside = rho <= 1.0
    else:
        inside = (v >= -hy) & (v <= hy) & (np.abs(u) <= hx * (v + hy) / (2.0 * hy))
        rho = np.maximum(np.abs(u) / hx, np.abs(v) / hy)

    floor, power = info["shading"]["floor"], info["shading"]["power"]
    local_shade = floor + (1.0 - floor) * (1.0 - np.clip(rho, 0.0, 1.0) ** power)
    mask[y0:y1, x0:x1] = inside
    shade[y0:y1, x0:x1] = np.where(inside, local_shade, 0.0)
    return mask, shade


def render_scene(
    specs: Sequence[ObjectSpec], color: Sequence[float], canvas: Canvas = settings.CANVAS_SIZE
) -> Tuple[np.ndarray, GroundTruth]:
    """Composite objects front to back by depth_rank onto a black canvas."""
    ranks = [spec.depth_rank for spec in specs]
    if len(set(ranks)) != len(ranks):
        raise GenerationError("depth ranks within a scene must be distinct")

    h, w = canvas
    rgb = np.asarray(color, dtype=np.float64)
    rasters = [rasterize_object(spec, canvas) for spec in specs]
    for i, (mask, _) in enumerate(rasters):
        if not mask.any():
            raise GenerationError("degenerate placement", {"object": i})

    image = np.zeros((h, w, 3), dtype=np.float64)
    taken = np.zeros((h, w), dtype=bool)
    visible: List[np.ndarray] = [None] * len(specs)
    for i in sorted(range(len(specs)), key=lambda k: specs[k].depth_rank):
        mask, shade = rasters[i]
        vis = mask & ~taken
        image[vis] = shade[vis][:, None] * rgb
        taken |= vis
        visible[i] = vis

    amodal = [mask for mask, _ in rasters]
    truth = GroundTruth(
        objects=list(specs),
        color=tuple(float(x) for x in color),
        amodal_masks=amodal,
        visible_masks=visible,
        boxes=[tight_box(m) for m in amodal],
    )
    return image, truth


# ==============================================================================
# SAMPLING
# ==============================================================================

def sample_color(rng: np.random.Generator) -> RGB:
    """Uniform RGB in [0, 1]^3 conditioned on r + g + b >= 1."""
    while True:
        rgb = rng.uniform(0.0, 1.0, size=3)
        if rgb.sum() >= 1.0:
            return tuple(float(x) for x in rgb)


def _sample_pose(rng: np.random.Generator) -> Tuple[float, float]:
    scale = float(rng.uniform(*settings.SCALE_RANGE))
    rotation = float(rng.uniform(0.0, 360.0))
    return scale, rotation


def _check_scene(
    specs: Sequence[ObjectSpec], color: RGB, canvas: Canvas, min_visible: int, require_overlap: bool
) -> Optional[str]:
    """Return a rejection reason, or None if the scene is acceptable."""
    try:
        _, truth = render_scene(specs, color, canvas)
    except GenerationError:
        return "off_canvas"
    if require_overlap and not np.any(truth.amodal_masks[0] & truth.amodal_masks[1]):
        return "no_overlap"
    if min(truth.visible_counts()) < min_visible:
        return "visibility"
    return None


def _sample_pair_scene(
    rng: np.random.Generator,
    classes: Tuple[int, int],
    canvas: Canvas,
    min_visible: int,
    min_separation: float,
    budget: int,
) -> Tuple[Tuple[ObjectSpec, ...], RGB]:
    h, w = canvas
    margin = settings.PLACEMENT_MARGIN
    lo, hi = settings.PAIR_OFFSET_RANGE
    rejections: Counter = Counter()
    for _ in range(budget):
        color = sample_color(rng)
        cx, cy = rng.uniform(margin, w - margin), rng.uniform(margin, h - margin)
        radius, angle = rng.uniform(lo, hi), rng.uniform(0.0, 2.0 * math.pi)
        cx2, cy2 = cx + radius * math.cos(angle), cy + radius * math.sin(angle)
        if not (margin / 2 <= cx2 <= w - margin / 2 and margin / 2 <= cy2 <= h - margin / 2):
            rejections["placement"] += 1
            continue
        if radius < min_separation:
            rejections["separation"] += 1
            continue
        ranks = rng.permutation(2)
        specs = []
        for k, (center, cls) in enumerate(zip(((cx, cy), (cx2, cy2)), classes)):
            scale, rotation = _sample_pose(rng)
            specs.append(ObjectSpec(int(cls), (float(center[0]), float(center[1])), scale, rotation, int(ranks[k])))
        reason = _check_scene(specs, color, canvas, min_visible, require_overlap=True)
        if reason is None:
            return tuple(specs), color
        rejections[reason] += 1
    raise GenerationError("rejection budget exhausted", dict(rejections))


def _sample_multi_scene(
    rng: np.random.Generator,
    n_objects: int,
    canvas: Canvas,
    min_visible: int,
    min_separation: float,
    budget: int,
) -> Tuple[Tuple[ObjectSpec, ...], RGB]:
    h, w = canvas
    margin = settings.PLACEMENT_MARGIN
    rejections: Counter = Counter()
    for _ in range(budget):
        color = sample_color(rng)
        centers: List[Tuple[float, float]] = []
        for _ in range(n_objects):
            for _ in range(50):
                c = (float(rng.uniform(margin, w - margin)), float(rng.uniform(margin, h - margin)))
                if all(math.dist(c, other) >= min_separation for other in centers):
                    centers.append(c)
                    break
        if len(centers) < n_objects:
            rejections["separation"] += 1
            continue
        classes = rng.integers(1, settings.NUM_CLASSES + 1, size=n_objects)
        ranks = rng.permutation(n_objects)
        specs = []
        for k in range(n_objects):
            scale, rotation = _sample_pose(rng)
            specs.append(ObjectSpec(int(classes[k]), centers[k], scale, rotation, int(ranks[k])))
        reason = _check_scene(specs, color, canvas, min_visible, require_overlap=False)
        if reason is None:
            return tuple(specs), color
        rejections[reason] += 1
    raise GenerationError("rejection budget exhausted", dict(rejections))


# ==============================================================================
# DATASETS
# ==============================================================================

def pair_labels(seed: int, n_per_class: int) -> List[Tuple[int, int]]:
    """Balanced class multiset, shuffled and paired consecutively."""
    if n_per_class < 1:
        raise GenerationError(f"n_per_class must be >= 1, got {n_per_class}")
    labels = np.repeat(np.arange(1, settings.NUM_CLASSES + 1), n_per_class)
    derive_rng(seed, "dataset", DATASET_KEYS["pairs"]).shuffle(labels)
    return [(int(labels[i]), int(labels[i + 1])) for i in range(0, len(labels), 2)]


def iter_pairs_dataset(
    seed: int,
    n_per_class: int = settings.N_PER_CLASS,
    canvas: Canvas = settings.CANVAS_SIZE,
    min_visible: int = settings.MIN_VISIBLE_PIXELS,
    min_separation: float = settings.MIN_SEPARATION_FACTOR * settings.DECODER_SIDE,
    budget: int = settings.REJECTION_BUDGET,
) -> Iterator[Scene]:
    for index, classes in enumerate(pair_labels(seed, n_per_class)):
        rng = derive_rng(seed, "dataset", DATASET_KEYS["pairs"], index)
        specs, color = _sample_pair_scene(rng, classes, canvas, min_visible, min_separation, budget)
        yield Scene(f"pairs-{index:05d}", specs, color, canvas)


def gen_pairs_dataset(seed: int, n_per_class: int = settings.N_PER_CLASS, **kwargs) -> List[Scene]:
    """10 * n_per_class / 2 two-object scenes, each class appearing n_per_class times."""
    scenes = list(iter_pairs_dataset(seed, n_per_class, **kwargs))
    logger.info("Generated %d pair scenes (%d per class)", len(scenes), n_per_class)
    return scenes


def centered_spec(spec: ObjectSpec, side: int = settings.DECODER_SIDE) -> ObjectSpec:
    """Rescale and move an object so its larger extent fills a side x side frame."""
    ext = object_extent(spec)
    factor = side / max(ext.width, ext.height)
    ecx, ecy = ext.center
    dx, dy = (spec.center[0] - ecx) * factor, (spec.center[1] - ecy) * factor
    return replace(spec, center=(side / 2.0 + dx, side / 2.0 + dy), scale=spec.scale * factor, depth_rank=0)


def gen_decoder_dataset(pairs: Sequence[Scene], side: int = settings.DECODER_SIDE) -> List[DecoderSample]:
    """Two isolated, centred objects per pair scene."""
    samples = []
    for scene in pairs:
        for k, spec in enumerate(scene.objects):
            samples.append(
                DecoderSample(
                    sample_id=f"{scene.scene_id}-{k}",
                    cls=spec.cls,
                    source_scene=scene.scene_id,
                    spec=centered_spec(spec, side),
                    color=scene.color,
                    side=side,
                )
            )
    return samples


def scaled_counts(counts: Sequence[Tuple[int, int]], scale: float) -> Tuple[Tuple[int, int], ...]:
    return tuple((n_obj, max(1, int(round(count * scale)))) for n_obj, count in counts)


def _gen_multi_set(
    seed: int, name: str, counts: Sequence[Tuple[int, int]], canvas: Canvas, min_visible: int,
    min_separation: float, budget: int,
) -> List[Scene]:
    scenes = []
    for n_objects, count in counts:
        for _ in range(count):
            index = len(scenes)
            rng = derive_rng(seed, "dataset", DATASET_KEYS[name], index)
            specs, color = _sample_multi_scene(rng, n_objects, canvas, min_visible, min_separation, budget)
            scenes.append(Scene(f"{name}-{index:05d}", specs, color, canvas))
    return scenes


def gen_eval_sets(
    seed: int,
    validation_counts: Sequence[Tuple[int, int]] = settings.VALIDATION_COUNTS,
    test_counts: Sequence[Tuple[int, int]] = settings.TEST_COUNTS,
    canvas: Canvas = settings.CANVAS_SIZE,
    min_visible: int = settings.MIN_VISIBLE_PIXELS,
    min_separation: float = settings.MIN_SEPARATION_FACTOR * settings.DECODER_SIDE,
    budget: int = settings.REJECTION_BUDGET,
) -> Tuple[List[Scene], List[Scene]]:
    """Validation and test scene lists with the given (objects, count) composition."""
    validation = _gen_multi_set(seed, "validation", validation_counts, canvas, min_visible, min_separation, budget)
    test = _gen_multi_set(seed, "test", test_counts, canvas, min_visible, min_separation, budget)
    logger.info("Generated %d validation and %d test scenes", len(validation), len(test))
    return validation, test


# ==============================================================================
# PERTURBATIONS
# ==============================================================================

def perturb_rotate(scenes: Sequence[Scene], degrees: float) -> List[Scene]:
    """Spin every object by `degrees` (mod 360) and re-render."""
    delta = float(degrees) % 360.0
    if delta == 0.0:
        return list(scenes)
    return [
        replace(
            scene,
            objects=tuple(replace(o, rotation=(o.rotation + delta) % 360.0) for o in scene.objects),
        )
        for scene in scenes
    ]


def enlarge_window(truth: GroundTruth, canvas: Canvas, crop_side: int) -> Tuple[int, int, int]:
    """Square window of `crop_side` containing every object pixel, centred on them."""
    h, w = canvas
    if crop_side > min(h, w) or crop_side < 1:
        raise GenerationError(f"crop side {crop_side} does not fit a {h}x{w} canvas")
    x0 = min(b.x_min for b in truth.boxes)
    y0 = min(b.y_min for b in truth.boxes)
    x1 = max(b.x_max for b in truth.boxes)
    y1 = max(b.y_max for b in truth.boxes)
    if x1 - x0 > crop_side or y1 - y0 > crop_side:
        raise GenerationError(
            f"objects do not fit in a {crop_side}x{crop_side} window",
            {"extent_w": int(x1 - x0), "extent_h": int(y1 - y0)},
        )
    wx = int(np.clip(math.floor((x0 + x1 - crop_side) / 2.0), max(0, int(x1) - crop_side), min(int(x0), w - crop_side)))
    wy = int(np.clip(math.floor((y0 + y1 - crop_side) / 2.0), max(0, int(y1) - crop_side), min(int(y0), h - crop_side)))
    return wx, wy, int(crop_side)


def perturb_enlarge(scenes: Sequence[Scene], crop_side: int) -> List[Scene]:
    """Crop a crop_side window around all objects and upscale it to the canvas."""
    enlarged = []
    for scene in scenes:
        h, w = scene.canvas
        if crop_side == h == w:
            enlarged.append(scene)
            continue
        _, truth = render_scene(scene.objects, scene.color, scene.canvas)
        enlarged.append(replace(scene, window=enlarge_window(truth, scene.canvas, crop_side)))
    return enlarged


def _resample_window(
    image: np.ndarray, truth: GroundTruth, window: Tuple[int, int, int]
) -> Tuple[np.ndarray, GroundTruth]:
    h, w = image.shape[:2]
    wx, wy, side = window
    fy, fx = h / side, w / side
    ys = wy + (np.arange(h) + 0.5) / fy - 0.5
    xs = wx + (np.arange(w) + 0.5) / fx - 0.5
    grid = np.meshgrid(ys, xs, indexing="ij")

    out = np.stack(
        [ndimage.map_coordinates(image[..., ch], grid, order=1, mode="nearest") for ch in range(3)],
        axis=-1,
    )
    owner = ndimage.map_coordinates(truth.owner_map(), grid, order=0, mode="nearest")
    out[owner < 0] = 0.0
    amodal = [
        ndimage.map_coordinates(m.astype(np.uint8), grid, order=0, mode="nearest").astype(bool)
        for m in truth.amodal_masks
    ]
    visible = [owner == i for i in range(len(truth.objects))]

    objects = [
        replace(o, center=((o.center[0] - wx) * fx, (o.center[1] - wy) * fy), scale=o.scale * fx)
        for o in truth.objects
    ]
    boxes = [
        BoundingBox((b.x_min - wx) * fx, (b.y_min - wy) * fy, (b.x_max - wx) * fx, (b.y_max - wy) * fy)
        for b in truth.boxes
    ]
    return out, GroundTruth(objects, truth.color, amodal, visible, boxes)
