"""Glasses-side preprocessing toolbox.

Each tool turns a captured frame into something cheaper to send: OCR text,
a Canny-located document crop, or a crop enclosing the detected objects.
The OCR engine and the object detector are handles; the reference engines
read corpus annotations instead of running models.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .edges import canny, largest_component_box
from .errors import ToolError
from .imaging import as_image, crop, luma, to_uint8

Box = tuple[int, int, int, int]  # half-open x0, y0, x1, y1

TOOL_IDS = ("ocr", "canny", "object", "none")
PROBE_SIZE = 256
LAPLACIAN = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=float)


class Detection(NamedTuple):
    x0: float
    y0: float
    x1: float
    y1: float
    confidence: float
    category: str
    attributes: tuple[str, ...] = ()


class OcrHandle(Protocol):
    def extract(self, img: np.ndarray) -> str: ...


class DetectorHandle(Protocol):
    def detect(self, img: np.ndarray) -> list[Detection]: ...


def image_key(img: np.ndarray) -> str:
    """Content digest used by the annotation-backed engines."""
    arr = to_uint8(img)
    h = hashlib.sha1(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


# -- sharpness ---------------------------------------------------------------

def sharpness_score(img) -> float:
    """Variance of the 4-neighbour Laplacian of the luma channel."""
    gray = luma(as_image(img))
    response = ndimage.convolve(gray, LAPLACIAN, mode="nearest")
    return float(response.var())


def filter_by_scores(scores: Sequence[float], fraction: float = 0.10) -> list[int]:
    """Indices kept after dropping the ``floor(fraction*N)`` lowest scores.

    Ties are broken by index: the lower index is removed first.
    """
    if not 0 <= fraction < 1:
        raise ValueError(f"fraction must lie in [0, 1), got {fraction}")
    scores = np.asarray(scores, dtype=float)
    drop = math.floor(fraction * scores.size)
    order = np.lexsort((np.arange(scores.size), scores))
    return sorted(int(i) for i in order[drop:])


def filter_blurry(corpus: Sequence[np.ndarray], fraction: float = 0.10) -> list[int]:
    return filter_by_scores([sharpness_score(img) for img in corpus], fraction)


# -- probe -------------------------------------------------------------------

def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with pixel centres aligned (half-pixel convention)."""
    img = np.asarray(img, dtype=float)
    r0, r1, fr = _axis_weights(img.shape[0], out_h)
    c0, c1, fc = _axis_weights(img.shape[1], out_w)
    rows = img[r0] * (1 - fr)[:, None, None] + img[r1] * fr[:, None, None]
    return rows[:, c0] * (1 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]


def downsample_probe(img) -> np.ndarray:
    return resize_bilinear(as_image(img), PROBE_SIZE, PROBE_SIZE)


# -- OCR ---------------------------------------------------------------------

_DIGITS = "0123456789"
_CONFUSABLE = {"0": "8", "1": "7", "2": "7", "3": "8", "4": "9", "5": "6", "6": "8", "7": "1", "8": "6", "9": "4"}
_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz" + _DIGITS + ".,:-$ _"


def _misread(ch: str, rng: np.random.Generator) -> str:
    if ch in _CONFUSABLE and rng.random() < 0.7:
        return _CONFUSABLE[ch]
    pool = _DIGITS if ch in _DIGITS else _ALPHABET
    choices = [c for c in pool if c != ch]
    return choices[int(rng.integers(len(choices)))]


def corrupt_text(text: str, rate: float, rng: np.random.Generator) -> str:
    """Replace each character independently with probability ``rate``."""
    hits = rng.random(len(text)) < rate
    return "".join(_misread(c, rng) if hit else c for c, hit in zip(text, hits))


@dataclass
class ReferenceOcr:
    """Annotation-backed OCR whose error rate grows as the frame blurs.

    Per-character corruption probability is
    ``corruption * (1 - sharpness / max_sharpness)``.
    """

    texts: dict[str, str] = field(default_factory=dict)
    max_sharpness: float = 1.0
    corruption: float = 0.3
    seed: int = 0

    _sharpness: dict[str, float] = field(default_factory=dict, repr=False)

    def register(self, img: np.ndarray, text: str, sharpness: float | None = None) -> None:
        key = image_key(img)
        self.texts[key] = text
        if sharpness is not None:
            self._sharpness[key] = float(sharpness)

    def error_rate(self, img: np.ndarray, key: str | None = None) -> float:
        if self.max_sharpness <= 0:
            return self.corruption
        key = key or image_key(img)
        if key not in self._sharpness:
            self._sharpness[key] = sharpness_score(img)
        ratio = min(1.0, self._sharpness[key] / self.max_sharpness)
        return min(1.0, max(0.0, self.corruption * (1.0 - ratio)))

    def extract(self, img: np.ndarray) -> str:
        key = image_key(img)
        if key not in self.texts:
            raise ToolError("reference OCR has no annotation for this image")
        digest = int(key[:16], 16)
        rng = np.random.default_rng([self.seed, digest])
        return corrupt_text(self.texts[key], self.error_rate(img, key), rng)


def ocr_extract(img, engine: OcrHandle) -> str:
    return engine.extract(as_image(img))


# -- Canny document ROI ------------------------------------------------------

BORDER_PAD = 4
MIN_COVERAGE = 0.05


def canny_box(img, low: float = 0.04, high: float = 0.08, *, min_coverage: float = MIN_COVERAGE) -> Box:
    """Bounding box of the largest connected Canny edge component.

    The frame is surrounded by a thin dark border first, so a bright page
    touching the frame edge still yields a closed outline.  Boxes covering
    less than ``min_coverage`` of the frame fall back to the full frame.
    """
    img = as_image(img)
    h, w, _ = img.shape
    full = (0, 0, w, h)
    gray = np.pad(luma(img), BORDER_PAD, mode="constant")
    box = largest_component_box(canny(gray, low, high))
    if box is None:
        return full
    x0, y0, x1, y1 = box
    x0, y0 = max(0, x0 - BORDER_PAD), max(0, y0 - BORDER_PAD)
    x1, y1 = min(w, x1 - BORDER_PAD), min(h, y1 - BORDER_PAD)
    if x1 <= x0 or y1 <= y0 or (x1 - x0) * (y1 - y0) < min_coverage * w * h:
        return full
    return x0, y0, x1, y1


def canny_roi(img, low: float = 0.04, high: float = 0.08) -> np.ndarray:
    img = as_image(img)
    return crop(img, canny_box(img, low, high))


# -- object ROI --------------------------------------------------------------

def _round_half_up(v: float) -> int:
    return math.floor(round(v, 9) + 0.5)


def object_box(detections: Sequence[Detection], width: int, height: int,
               conf_threshold: float = 0.30, margin: float = 0.05) -> Box:
    """Minimal rectangle enclosing confident detections, grown by ``margin``.

    The margin is a fraction of the merged box's own width/height; edges are
    rounded half up and clamped to the frame.
    """
    if not (0 <= conf_threshold <= 1 and 0 <= margin <= 1):
        raise ValueError("thresholds must lie in [0, 1]")
    kept = [d for d in detections if d.confidence >= conf_threshold]
    if not kept:
        return 0, 0, width, height
    x0 = min(d.x0 for d in kept)
    y0 = min(d.y0 for d in kept)
    x1 = max(d.x1 for d in kept)
    y1 = max(d.y1 for d in kept)
    mx, my = margin * (x1 - x0), margin * (y1 - y0)
    return (
        max(0, _round_half_up(x0 - mx)),
        max(0, _round_half_up(y0 - my)),
        min(width, _round_half_up(x1 + mx)),
        min(height, _round_half_up(y1 + my)),
    )


@dataclass
class ReferenceDetector:
    """Annotation-backed detector: returns the stored detections for a frame."""

    detections: dict[str, list[Detection]] = field(default_factory=dict)

    def register(self, img: np.ndarray, dets: Sequence[Detection]) -> None:
        self.detections[image_key(img)] = list(dets)

    def detect(self, img: np.ndarray) -> list[Detection]:
        key = image_key(img)
        if key not in self.detections:
            raise ToolError("reference detector has no annotation for this image")
        return list(self.detections[key])


def object_roi(img, det: DetectorHandle, conf_threshold: float = 0.30, margin: float = 0.05) -> np.ndarray:
    img = as_image(img)
    box = object_box(det.detect(img), img.shape[1], img.shape[0], conf_threshold, margin)
    return crop(img, box)


# -- registry ----------------------------------------------------------------

@dataclass
class ToolResult:
    tool: str
    image: np.ndarray | None = None
    text: str | None = None
    box: Box | None = None


@dataclass
class ToolRegistry:
    """Maps tool ids to callables ``(img, **options) -> ToolResult``."""

    tools: dict[str, Callable[..., ToolResult]] = field(default_factory=dict)
    config: dict[str, dict] = field(default_factory=dict)

    def register(self, tool_id: str, fn: Callable[..., ToolResult], **config) -> None:
        self.tools[tool_id] = fn
        self.config[tool_id] = config

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self.tools

    def run(self, tool_id: str, img: np.ndarray, **options) -> ToolResult:
        if tool_id not in self.tools:
            raise ToolError(f"no tool registered under {tool_id!r}")
        return self.tools[tool_id](img, **{**self.config.get(tool_id, {}), **options})


def default_registry(ocr: OcrHandle, detector: DetectorHandle, *, canny_low: float = 0.04,
                     canny_high: float = 0.08, conf_threshold: float = 0.30, margin: float = 0.05) -> ToolRegistry:
    def run_ocr(img, **_):
        return ToolResult("ocr", text=ocr_extract(img, ocr))

    def run_canny(img, low=canny_low, high=canny_high, **_):
        box = canny_box(img, low, high)
        return ToolResult("canny", image=crop(img, box), box=box)

    def run_object(img, focus: Callable[[Detection], bool] | None = None,
                   conf_threshold=conf_threshold, margin=margin, **_):
        dets = detector.detect(img)
        if focus is not None:
            focused = [d for d in dets if focus(d)]
            dets = focused or dets
        box = object_box(dets, img.shape[1], img.shape[0], conf_threshold, margin)
        return ToolResult("object", image=crop(img, box), box=box)

    def run_none(img, **_):
        return ToolResult("none", image=img, box=(0, 0, img.shape[1], img.shape[0]))

    registry = ToolRegistry()
    registry.register("ocr", run_ocr)
    registry.register("canny", run_canny)
    registry.register("object", run_object)
    registry.register("none", run_none)
    return registry
