"""Synthetic desk-scale corpus: receipts, documents and street scenes.

Every image is rendered on a content region, then placed on a darker
canvas with 30% background padding, a global lighting gain and additive
sensor noise.  Ground truth (answers, answer regions, object boxes) goes
into a sidecar ``annotations.jsonl``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from .errors import ConfigError
from .imaging import from_uint8, load_png, save_png, to_uint8

KINDS = ("receipt", "document", "scene")
SCENE_CATEGORIES = ("person", "car", "dog", "bicycle")
CLOTHING = {"black": (20, 20, 24), "red": (200, 40, 40), "blue": (40, 70, 200),
            "green": (40, 150, 60), "yellow": (230, 200, 40)}
DESK = (0.16, 0.15, 0.14)

_STORES = ("CORNER MART", "BLUE CAFE", "CITY DELI", "FRESH FOODS", "BOOK NOOK", "QUICK STOP")
_ITEMS = ("COFFEE", "BAGEL", "MILK", "BREAD", "APPLES", "TEA", "SOUP", "PASTA", "RICE", "EGGS", "JUICE")
_TOPICS = ("SALES", "BUDGET", "TRAFFIC", "ENERGY", "SURVEY", "YIELD", "OUTPUT", "RAINFALL")
_WORDS = ("the", "quarterly", "figures", "show", "a", "steady", "rise", "across", "all", "regions", "with",
          "minor", "dips", "in", "spring", "and", "summer", "totals", "remain", "within", "plan")


@dataclass(frozen=True)
class CorpusSpec:
    kind: str
    count: int
    seed: int = 0
    padding: float = 0.30
    noise_sigma: float = 0.01
    lighting_jitter: float = 0.10
    content_w: int = 640
    content_h: int = 480
    blur_fraction: float = 0.12

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"corpus kind must be one of {KINDS}, got {self.kind!r}")
        if self.count < 1:
            raise ConfigError("corpus count must be >= 1")
        if not 0 <= self.padding < 5 or self.noise_sigma < 0 or not 0 <= self.lighting_jitter < 1:
            raise ConfigError("invalid augmentation parameters")
        if self.content_w < 64 or self.content_h < 64:
            raise ConfigError("content region must be at least 64 x 64")
        if not 0 <= self.blur_fraction <= 1:
            raise ConfigError("blur_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> "CorpusSpec":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad corpus spec: {exc}") from None


@dataclass
class CorpusItem:
    pixels: np.ndarray  # uint8, H x W x 3; floats are made on demand to keep corpora small
    ann: dict = field(default_factory=dict)

    @property
    def image(self) -> np.ndarray:
        return from_uint8(self.pixels)


def canvas_size(content_w: int, content_h: int, padding: float) -> tuple[int, int]:
    """Padded canvas dims, rounded to even numbers."""
    def grow(v):
        return int(2 * round(v * (1 + padding) / 2))
    return grow(content_w), grow(content_h)


def _font(size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.load_default(size=max(8, int(size)))


def _shift(box, dx, dy):
    x0, y0, x1, y1 = box
    return [int(x0 + dx), int(y0 + dy), int(x1 + dx), int(y1 + dy)]


# -- content renderers ----------------------------------------------------------
# Each returns (content image uint8, annotation dict in content coords,
# background colour for the padding).

def _receipt(rng, w, h):
    im = Image.new("RGB", (w, h), (244, 241, 232))
    draw = ImageDraw.Draw(im)
    n_items = int(rng.integers(3, 6))
    prices = [round(float(rng.uniform(1, 20)), 2) for _ in range(n_items)]
    total = f"{sum(prices):.2f}"
    items = rng.choice(len(_ITEMS), n_items, replace=False)
    lines = [str(_STORES[int(rng.integers(len(_STORES)))]),
             f"DATE 2024-{int(rng.integers(1, 13)):02d}-{int(rng.integers(1, 29)):02d}"]
    lines += [f"{_ITEMS[i]} {p:.2f}" for i, p in zip(items, prices)]
    lines.append(f"TOTAL {total}")
    step = h / (len(lines) + 1)
    font = _font(step * 0.6)
    x = int(w * 0.08)
    answer_box = None
    for i, line in enumerate(lines):
        y = int(step * (i + 0.6))
        draw.text((x, y), line, fill=(25, 25, 25), font=font)
        if line.startswith("TOTAL"):
            answer_box = list(draw.textbbox((x, y), line, font=font))
    ann = {"text": "\n".join(lines), "question": "What is the total?", "answer": total,
           "answer_box": answer_box}
    return np.asarray(im), ann, DESK


def _document(rng, w, h):
    desk = tuple(int(255 * c) for c in DESK)
    im = Image.new("RGB", (w, h), desk)
    draw = ImageDraw.Draw(im)
    pw, ph = int(w * rng.uniform(0.55, 0.75)), int(h * rng.uniform(0.6, 0.8))
    px, py = int(rng.integers(0, w - pw + 1)), int(rng.integers(0, h - ph + 1))
    page = [px, py, px + pw, py + ph]
    draw.rectangle(page, fill=(250, 250, 247), outline=(60, 60, 60), width=2)
    m = int(pw * 0.07)
    title = f"{_TOPICS[int(rng.integers(len(_TOPICS)))]} {int(rng.integers(1000, 10000))}"
    tfont = _font(ph * 0.09)
    tpos = (px + m, py + int(ph * 0.06))
    draw.text(tpos, title, fill=(10, 10, 10), font=tfont)
    answer_box = list(draw.textbbox(tpos, title, font=tfont))
    bfont = _font(ph * 0.045)
    y = answer_box[3] + int(ph * 0.05)
    for _ in range(3):
        words = " ".join(_WORDS[int(i)] for i in rng.integers(0, len(_WORDS), 5))
        draw.text((px + m, y), words, fill=(50, 50, 50), font=bfont)
        y += int(ph * 0.07)
    chart = [px + m, y + int(ph * 0.03), px + pw - m, py + ph - m]
    if chart[3] - chart[1] > 10:
        draw.line([chart[0], chart[3], chart[2], chart[3]], fill=(0, 0, 0), width=2)
        draw.line([chart[0], chart[1], chart[0], chart[3]], fill=(0, 0, 0), width=2)
        n_bars = int(rng.integers(3, 7))
        bw = (chart[2] - chart[0]) / (2 * n_bars + 1)
        for i in range(n_bars):
            top = chart[3] - (chart[3] - chart[1]) * rng.uniform(0.2, 0.95)
            x0 = chart[0] + bw * (2 * i + 1)
            draw.rectangle([x0, top, x0 + bw, chart[3] - 1], fill=(70, 110, 180))
    ann = {"title": title, "question": "What is the title of the page?", "answer": title,
           "answer_box": answer_box, "page_box": page, "chart_box": chart}
    return np.asarray(im), ann, DESK


def _draw_object(draw, cat, box, color):
    x0, y0, x1, y1 = box
    bw, bh = x1 - x0, y1 - y0
    if cat == "person":
        head = bh * 0.22
        cx = (x0 + x1) / 2
        draw.ellipse([cx - head / 2, y0, cx + head / 2, y0 + head], fill=(224, 180, 150))
        draw.rectangle([x0, y0 + head, x1, y1], fill=color)
    elif cat == "car":
        r = bh * 0.22
        draw.rectangle([x0 + bw * 0.2, y0, x1 - bw * 0.2, y0 + bh * 0.45], fill=color)
        draw.rectangle([x0, y0 + bh * 0.4, x1, y1 - r], fill=color)
        for cx in (x0 + bw * 0.22, x1 - bw * 0.22):
            draw.ellipse([cx - r, y1 - 2 * r, cx + r, y1], fill=(20, 20, 20))
    elif cat == "dog":
        draw.ellipse([x0, y0 + bh * 0.3, x1 - bw * 0.2, y1 - bh * 0.2], fill=color)
        draw.ellipse([x1 - bw * 0.35, y0, x1, y0 + bh * 0.5], fill=color)
        for lx in (x0 + bw * 0.15, x1 - bw * 0.4):
            draw.rectangle([lx, y1 - bh * 0.3, lx + bw * 0.08, y1], fill=color)
    else:  # bicycle
        r = min(bw * 0.25, bh * 0.45)
        c1, c2 = (x0 + r, y1 - r), (x1 - r, y1 - r)
        for cx, cy in (c1, c2):
            draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=color, width=3)
        draw.line([c1, ((x0 + x1) / 2, y0 + bh * 0.3), c2], fill=color, width=3)


_SIZES = {"person": (0.07, 0.26), "car": (0.24, 0.16), "dog": (0.11, 0.09), "bicycle": (0.14, 0.13)}
_FILL = {"car": [(180, 30, 30), (30, 60, 160), (200, 200, 205)], "dog": [(140, 100, 60), (90, 70, 50)],
         "bicycle": [(30, 30, 30), (200, 40, 40)]}


def _scene(rng, w, h):
    yy, xx = np.mgrid[0:h, 0:w] / max(w, h)
    base = np.stack([0.55 + 0.15 * yy, 0.6 + 0.1 * yy, 0.5 + 0.05 * xx], axis=-1)
    texture = ndimage.gaussian_filter(rng.standard_normal((h, w)), 3) * 0.15
    bg = np.clip(base + texture[..., None], 0, 1)
    im = Image.fromarray(to_uint8(bg))
    draw = ImageDraw.Draw(im)
    # cluster centre; objects stay inside a window about half the frame
    cw, ch = w * 0.5, h * 0.55
    cx0 = rng.uniform(0.05 * w, w - cw - 0.05 * w)
    cy0 = rng.uniform(0.05 * h, h - ch - 0.05 * h)
    cats = ["person", "person"] + [SCENE_CATEGORIES[1 + int(i)] for i in rng.integers(0, 3, int(rng.integers(2, 4)))]
    colors = ["black"] + [str(rng.choice(["red", "blue", "green", "yellow"]))]
    objects = []
    for i, cat in enumerate(cats):
        sw, sh = _SIZES[cat]
        bw, bh = sw * w * rng.uniform(0.85, 1.15), sh * h * rng.uniform(0.85, 1.15)
        x0 = cx0 + rng.uniform(0, max(1.0, cw - bw))
        y0 = cy0 + rng.uniform(0, max(1.0, ch - bh))
        box = [int(x0), int(y0), int(x0 + bw), int(y0 + bh)]
        if cat == "person":
            attr = colors[i]
            fill = CLOTHING[attr]
            attrs = [attr]
        else:
            opts = _FILL[cat]
            fill = opts[int(rng.integers(len(opts)))]
            attrs = []
        _draw_object(draw, cat, box, fill)
        objects.append({"box": box, "category": cat, "confidence": round(float(rng.uniform(0.55, 0.95)), 3),
                        "attributes": attrs})
    distractors = []
    for _ in range(int(rng.integers(1, 3))):
        dw, dh = w * 0.08, h * 0.08
        x0, y0 = rng.uniform(0, w - dw), rng.uniform(0, h - dh)
        distractors.append({"box": [int(x0), int(y0), int(x0 + dw), int(y0 + dh)],
                            "category": str(rng.choice(SCENE_CATEGORIES)),
                            "confidence": round(float(rng.uniform(0.05, 0.25)), 3), "attributes": []})
    ann = {"objects": objects, "distractors": distractors,
           "categories": sorted({o["category"] for o in objects}),
           "question": "Describe the scene.",
           "voice_command": "Observe the person in black clothing",
           "context": "pedestrian crossing scene"}
    return np.asarray(im), ann, DESK


_RENDERERS = {"receipt": _receipt, "document": _document, "scene": _scene}
_BOX_KEYS = ("answer_box", "page_box", "chart_box")


# -- corpus ----------------------------------------------------------------------

def _augment(content: np.ndarray, spec: CorpusSpec, rng, bg) -> tuple[np.ndarray, int, int]:
    ch, cw = content.shape[:2]
    w, h = canvas_size(cw, ch, spec.padding)
    ox, oy = int(rng.integers(0, w - cw + 1)), int(rng.integers(0, h - ch + 1))
    canvas = np.empty((h, w, 3))
    canvas[:] = bg
    canvas[oy:oy + ch, ox:ox + cw] = from_uint8(content)
    gain = 1.0 + rng.uniform(-spec.lighting_jitter, spec.lighting_jitter)
    canvas = canvas * gain + rng.normal(0.0, spec.noise_sigma, canvas.shape)
    return to_uint8(np.clip(canvas, 0, 1)), ox, oy


def generate_corpus(spec: CorpusSpec) -> list[CorpusItem]:
    """Render ``spec.count`` images; identical specs give identical corpora."""
    root = np.random.SeedSequence([spec.seed, KINDS.index(spec.kind)])
    n_blur = round(spec.blur_fraction * spec.count) if spec.kind == "receipt" else 0
    blurred = set(np.random.default_rng(root.spawn(1)[0]).permutation(spec.count)[:n_blur].tolist())
    items = []
    for idx, child in enumerate(root.spawn(spec.count + 1)[1:]):
        rng = np.random.default_rng(child)
        content, ann, bg = _RENDERERS[spec.kind](rng, spec.content_w, spec.content_h)
        sigma = 0.0
        if idx in blurred:
            sigma = float(rng.uniform(1.5, 3.0))
            content = to_uint8(ndimage.gaussian_filter(from_uint8(content), (sigma, sigma, 0)))
        img, ox, oy = _augment(content, spec, rng, bg)
        for key in _BOX_KEYS:
            if ann.get(key) is not None:
                ann[key] = _shift(ann[key], ox, oy)
        for obj in ann.get("objects", []) + ann.get("distractors", []):
            obj["box"] = _shift(obj["box"], ox, oy)
        ann.update(id=f"{spec.kind}_{idx:04d}", kind=spec.kind, file=f"{spec.kind}_{idx:04d}.png",
                   content_box=[ox, oy, ox + spec.content_w, oy + spec.content_h],
                   blurred=bool(sigma > 0), blur_sigma=round(sigma, 4))
        items.append(CorpusItem(pixels=img, ann=ann))
    return items


def write_corpus(items: list[CorpusItem], out_dir: str | Path, spec: CorpusSpec | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for it in items:
        save_png(it.image, out / it.ann["file"])
    with open(out / "annotations.jsonl", "w") as fh:
        for it in items:
            fh.write(json.dumps(it.ann, sort_keys=True) + "\n")
    if spec is not None:
        (out / "spec.json").write_text(json.dumps(asdict(spec), indent=2, sort_keys=True) + "\n")
    return out


def load_corpus(path: str | Path) -> list[CorpusItem]:
    path = Path(path)
    items = []
    with open(path / "annotations.jsonl") as fh:
        for line in fh:
            if line.strip():
                ann = json.loads(line)
                items.append(CorpusItem(pixels=to_uint8(load_png(path / ann["file"])), ann=ann))
    return items
