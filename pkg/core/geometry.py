"""
Geometry
========

Boxes, detections, IoU/DIoU, cropping and support masks.

Conventions:
- Images are float arrays of shape (H, W, 3) indexed [row, col, channel],
  row = y and col = x, values in [0, 1].
- Boxes hold real coordinates (x_min, y_min, x_max, y_max) and may extend
  past the image. Raster operations round them to integer pixel bounds with
  the half-open convention [x0, x1) and clip at the use site.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from core.exceptions import GeometryError, ShapeError

PixelBounds = Tuple[int, int, int, int]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in real pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(
                f"invalid box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @classmethod
    def from_list(cls, values: Iterable[float]) -> "BoundingBox":
        x0, y0, x1, y1 = (float(v) for v in values)
        return cls(x0, y0, x1, y1)

    def to_list(self) -> list:
        return [float(self.x_min), float(self.y_min), float(self.x_max), float(self.y_max)]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def to_pixels(self) -> PixelBounds:
        """Integer pixel bounds [x0, x1) x [y0, y1), at least one pixel wide."""
        x0 = int(np.floor(self.x_min + 0.5))
        y0 = int(np.floor(self.y_min + 0.5))
        x1 = max(int(np.floor(self.x_max + 0.5)), x0 + 1)
        y1 = max(int(np.floor(self.y_max + 0.5)), y0 + 1)
        return x0, y0, x1, y1


@dataclass(frozen=True)
class Detection:
    """
    One candidate object hypothesis.

    `index` identifies the detection within its image (position in the
    score-sorted candidate list); reconstruction caches are keyed on it.
    """

    score: float
    box: BoundingBox
    occ: float
    cls: int
    index: int = -1

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise GeometryError(f"score {self.score} outside [0, 1]")
        if not 0.0 <= self.occ <= 1.0:
            raise GeometryError(f"occlusion score {self.occ} outside [0, 1]")

    @property
    def key(self) -> Tuple[int, int]:
        return (self.index, self.cls)

    def with_label(self, cls: int) -> "Detection":
        return replace(self, cls=int(cls))

    def with_score(self, score: float) -> "Detection":
        return replace(self, score=float(score))

    def with_index(self, index: int) -> "Detection":
        return replace(self, index=int(index))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "score": float(self.score),
            "box": self.box.to_list(),
            "occ": float(self.occ),
            "cls": int(self.cls),
        }

    @classmethod
    def from_dict(cls, record: Dict[str, Any], index: int = -1) -> "Detection":
        return cls(
            score=float(record["score"]),
            box=BoundingBox.from_list(record["box"]),
            occ=float(record["occ"]),
            cls=int(record["cls"]),
            index=index,
        )


@dataclass
class PixelSet:
    """Integer (x, y) coordinates inside a frame of shape (height, width)."""

    coords: np.ndarray
    frame_shape: Tuple[int, int]
    _mask: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        h, w = self.frame_shape
        if len(self.coords):
            xs, ys = self.coords[:, 0], self.coords[:, 1]
            if xs.min() < 0 or ys.min() < 0 or xs.max() >= w or ys.max() >= h:
                raise GeometryError("pixel set coordinate outside its frame")

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "PixelSet":
        ys, xs = np.nonzero(mask)
        return cls(np.stack([xs, ys], axis=1), tuple(mask.shape[:2]), _mask=mask.astype(bool))

    def to_mask(self) -> np.ndarray:
        if self._mask is not None:
            return self._mask
        mask = np.zeros(self.frame_shape, dtype=bool)
        if len(self.coords):
            mask[self.coords[:, 1], self.coords[:, 0]] = True
        return mask

    def __len__(self) -> int:
        return len(self.coords)


def validate_image(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ShapeError(f"expected an (H, W, 3) image, got shape {image.shape}")
    return image


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def diou(a: BoundingBox, b: BoundingBox) -> float:
    """IoU minus squared center distance over squared enclosing diagonal."""
    (ax, ay), (bx, by) = a.center, b.center
    rho2 = (ax - bx) ** 2 + (ay - by) ** 2
    cw = max(a.x_max, b.x_max) - min(a.x_min, b.x_min)
    ch = max(a.y_max, b.y_max) - min(a.y_min, b.y_min)
    return iou(a, b) - rho2 / (cw * cw + ch * ch)


def clip_bounds(box: BoundingBox, shape: Tuple[int, int]) -> PixelBounds:
    """Pixel bounds of `box` intersected with an image of shape (H, W)."""
    h, w = shape[:2]
    x0, y0, x1, y1 = box.to_pixels()
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w), min(y1, h)
    if x0 >= x1 or y0 >= y1:
        raise GeometryError("box outside image")
    return x0, y0, x1, y1


def crop(image: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Sub-raster of `image` over the pixels of box ∩ image bounds."""
    x0, y0, x1, y1 = clip_bounds(box, image.shape)
    return image[y0:y1, x0:x1]


def pixel_magnitude(image: np.ndarray) -> np.ndarray:
    """Euclidean norm of each pixel's RGB triple."""
    return np.sqrt(np.sum(np.square(image), axis=-1))


def support_mask(recon: np.ndarray, t0: float) -> np.ndarray:
    """Pixels whose RGB magnitude strictly exceeds the occlusion threshold."""
    if t0 < 0:
        raise GeometryError(f"occlusion threshold must be >= 0, got {t0}")
    return pixel_magnitude(recon) > t0


def blank_mask(image: np.ndarray) -> np.ndarray:
    """Pixels that are exactly (0, 0, 0)."""
    return ~np.any(image != 0.0, axis=-1)


def tight_box(mask: np.ndarray) -> Optional[BoundingBox]:
    """Smallest pixel-aligned box covering a boolean mask (None if empty)."""
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None
    return BoundingBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
