"""Raster helpers: validation, 8-bit conversion, PNG/JPEG via Pillow."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParameterError


def as_image(img) -> np.ndarray:
    """Validate an H x W x 3 float raster with values in [0, 1]."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"expected an H x W x 3 image, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0 or not np.all(np.isfinite(arr))):
        raise ParameterError("image values must lie in [0, 1]")
    return arr


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Round half up to 8 bits (truncation equals floor after clipping at zero)."""
    arr = np.asarray(img, dtype=float) * 255.0
    arr += 0.5
    np.clip(arr, 0.0, 255.0, out=arr)
    return arr.astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=float) / 255.0


def luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def jpeg_bytes(img: np.ndarray, quality: int = 50) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(buf, format="JPEG", quality=int(quality))
    return buf.getvalue()


def jpeg_decode(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def save_png(img: np.ndarray, path: str | Path) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG", optimize=False)


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def crop(img: np.ndarray, box: tuple[int, int, int, int]) -> np.ndarray:
    """Crop with a half-open (x0, y0, x1, y1) box."""
    x0, y0, x1, y1 = box
    return img[y0:y1, x0:x1]
