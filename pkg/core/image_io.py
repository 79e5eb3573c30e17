"""
Image I/O
=========

PNG previews (8-bit, lossy quantization) and the raw IMGF container
(lossless float32 round-trip).

IMGF layout: magic b"IMGF", u32 height, u32 width, then height*width*3
little-endian float32 values in row-major RGB order.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from core.exceptions import ShapeError
from core.geometry import validate_image

IMGF_MAGIC = b"IMGF"
_HEADER = struct.Struct("<4sII")

PathLike = Union[str, Path]


def encode_imgf(image: np.ndarray) -> bytes:
    validate_image(image)
    h, w = image.shape[:2]
    body = np.ascontiguousarray(image, dtype="<f4").tobytes()
    return _HEADER.pack(IMGF_MAGIC, h, w) + body


def decode_imgf(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise ShapeError("IMGF blob shorter than its header")
    magic, h, w = _HEADER.unpack_from(blob, 0)
    if magic != IMGF_MAGIC:
        raise ShapeError(f"bad IMGF magic {magic!r}")
    expected = _HEADER.size + h * w * 3 * 4
    if len(blob) != expected:
        raise ShapeError(f"IMGF payload size {len(blob)} != expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(h, w, 3).astype(np.float64)


def write_imgf(image: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_imgf(image))
    return path


def read_imgf(path: PathLike) -> np.ndarray:
    return decode_imgf(Path(path).read_bytes())


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(image: np.ndarray, path: PathLike) -> Path:
    """Save an RGB float image (or an (H, W) mask) as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if image.ndim == 2:
        Image.fromarray(to_uint8(image.astype(np.float64)), mode="L").save(path)
    else:
        validate_image(image)
        Image.fromarray(to_uint8(image), mode="RGB").save(path)
    return path


def read_png(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
