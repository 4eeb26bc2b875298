"""Canny edge detection on a grayscale float image."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_EIGHT = np.ones((3, 3), dtype=bool)


def gradients(gray: np.ndarray, sigma: float = 1.4) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-smoothed Sobel gradients, scaled to intensity change per pixel."""
    smoothed = ndimage.gaussian_filter(gray, sigma, mode="nearest")
    gx = ndimage.sobel(smoothed, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(smoothed, axis=0, mode="nearest") / 8.0
    return gx, gy


def non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are maximal along the quantized gradient direction."""
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1)
    h, w = mag.shape

    def shifted(dy, dx):
        return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    # neighbour offsets (dy, dx) for 0, 45, 90 and 135 degrees (image rows grow downward)
    sectors = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros_like(mag, dtype=bool)
    for sel, (dy, dx) in sectors:
        fwd, back = shifted(dy, dx), shifted(-dy, -dx)
        keep |= sel & (mag >= fwd) & (mag > back)
    return np.where(keep, mag, 0.0)


def hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    """Weak edges survive only when 8-connected to a strong edge."""
    weak = nms >= low
    labels, count = ndimage.label(weak, structure=_EIGHT)
    if count == 0:
        return weak
    strong_labels = np.unique(labels[nms >= high])
    strong_labels = strong_labels[strong_labels > 0]
    return np.isin(labels, strong_labels)


def canny(gray: np.ndarray, low: float, high: float, sigma: float = 1.4) -> np.ndarray:
    """Boolean edge map. Thresholds are in intensity-per-pixel units."""
    if not 0 <= low < high:
        raise ValueError(f"need 0 <= low < high, got {low}, {high}")
    gx, gy = gradients(np.asarray(gray, dtype=float), sigma)
    mag = np.hypot(gx, gy)
    return hysteresis(non_max_suppression(mag, gx, gy), low, high)


def largest_component_box(edges: np.ndarray) -> tuple[int, int, int, int] | None:
    """Half-open (x0, y0, x1, y1) box of the edge component with the largest box area."""
    labels, count = ndimage.label(edges, structure=_EIGHT)
    if count == 0:
        return None
    best, best_area = None, -1
    for sl in ndimage.find_objects(labels):
        ys, xs = sl
        area = (ys.stop - ys.start) * (xs.stop - xs.start)
        if area > best_area:
            best, best_area = (xs.start, ys.start, xs.stop, ys.stop), area
    return best
