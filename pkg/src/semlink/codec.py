"""Resolution-robust latent codec.

Images of any size are reflection-padded to multiples of 64, mapped to an
``M x H/16 x W/16`` latent by a pluggable analysis transform, quantized with
a single global min/max to ``b = 32/n`` bits, and packed for the semantic
chain.  The shipped transform is a 16x16 blockwise orthonormal DCT that keeps
the first 64 zigzag coefficients of every colour channel (3 x 64 = 192).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np
from scipy.fft import dctn, idctn

from .errors import CodecError, DecodingError
from .imaging import as_image
from .transport import HEADER_BYTES, RATIOS, SymbolStream, bits_per_element, pack_latent, unpack_latent

PAD_MULTIPLE = 64
DOWNSAMPLE = 16
LATENT_CHANNELS = 192

_HEADER = struct.Struct("<4sHHIIIIff")
MAGIC = b"SLAT"
assert _HEADER.size == HEADER_BYTES


class TransformHandle(Protocol):
    """Analysis/synthesis pair. ``forward`` sees padded H x W x 3 images."""

    channels: int

    def forward(self, image: np.ndarray) -> np.ndarray: ...

    def inverse(self, latent: np.ndarray) -> np.ndarray: ...


@lru_cache(maxsize=None)
def zigzag_order(size: int) -> tuple[tuple[int, int], ...]:
    """JPEG-style zigzag scan of a ``size x size`` block as (row, col) pairs."""
    cells = [(r, c) for r in range(size) for c in range(size)]
    return tuple(sorted(cells, key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else -rc[0])))


class BlockDCTTransform:
    """Blockwise orthonormal DCT-II with zigzag truncation."""

    def __init__(self, block: int = DOWNSAMPLE, keep: int = 64):
        if keep > block * block:
            raise CodecError("cannot keep more coefficients than a block holds")
        self.block = block
        self.keep = keep
        self.channels = 3 * keep
        order = zigzag_order(block)[:keep]
        self._rows = np.array([rc[0] for rc in order])
        self._cols = np.array([rc[1] for rc in order])

    def _blocks(self, image: np.ndarray) -> np.ndarray:
        h, w, _ = image.shape
        bs = self.block
        # -> (3, h/bs, w/bs, bs, bs)
        return image.transpose(2, 0, 1).reshape(3, h // bs, bs, w // bs, bs).transpose(0, 1, 3, 2, 4)

    def coefficients(self, image: np.ndarray) -> np.ndarray:
        """Full DCT coefficient array, shape (3, h/bs, w/bs, bs, bs)."""
        return dctn(self._blocks(image), axes=(-2, -1), norm="ortho")

    def forward(self, image: np.ndarray) -> np.ndarray:
        h, w, c = image.shape
        if c != 3 or h % self.block or w % self.block:
            raise CodecError(f"transform needs H x W x 3 with dims divisible by {self.block}, got {image.shape}")
        coef = self.coefficients(image)[..., self._rows, self._cols]  # (3, lh, lw, keep)
        return coef.transpose(0, 3, 1, 2).reshape(self.channels, h // self.block, w // self.block)

    def inverse(self, latent: np.ndarray) -> np.ndarray:
        m, lh, lw = latent.shape
        if m != self.channels:
            raise CodecError(f"latent has {m} channels, transform expects {self.channels}")
        bs = self.block
        coef = np.zeros((3, lh, lw, bs, bs))
        coef[..., self._rows, self._cols] = latent.reshape(3, self.keep, lh, lw).transpose(0, 2, 3, 1)
        blocks = idctn(coef, axes=(-2, -1), norm="ortho")
        return blocks.transpose(0, 1, 3, 2, 4).reshape(3, lh * bs, lw * bs).transpose(1, 2, 0)

    def discarded_energy(self, image: np.ndarray) -> float:
        """Energy of the coefficients ``forward`` throws away."""
        coef = self.coefficients(image)
        return float(np.sum(coef**2) - np.sum(coef[..., self._rows, self._cols] ** 2))


DEFAULT_TRANSFORM = BlockDCTTransform()


@dataclass(frozen=True)
class LatentTensor:
    data: np.ndarray  # (m, lh, lw)
    orig_h: int
    orig_w: int

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def lh(self) -> int:
        return self.data.shape[1]

    @property
    def lw(self) -> int:
        return self.data.shape[2]

    @property
    def num_elements(self) -> int:
        return int(self.data.size)


@dataclass(frozen=True)
class QuantizedLatent:
    levels: np.ndarray  # int64, (m, lh, lw)
    n: int
    y_min: float
    y_max: float
    orig_h: int
    orig_w: int

    @property
    def b(self) -> int:
        return 32 // self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.levels.shape)


def padded_dims(h: int, w: int) -> tuple[int, int]:
    return math.ceil(h / PAD_MULTIPLE) * PAD_MULTIPLE, math.ceil(w / PAD_MULTIPLE) * PAD_MULTIPLE


def latent_size(h: int, w: int, m: int = LATENT_CHANNELS) -> int:
    """Element count of the latent for an ``h x w`` input after padding."""
    if h < 1 or w < 1 or m < 1:
        raise CodecError("dimensions must be positive")
    ph, pw = padded_dims(h, w)
    return m * (ph // DOWNSAMPLE) * (pw // DOWNSAMPLE)


def pad_reflect(img) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflection-pad bottom/right to multiples of 64; returns (padded, (h, w))."""
    img = as_image(img)
    h, w, _ = img.shape
    ph, pw = padded_dims(h, w)
    padded = np.pad(img, ((0, ph - h), (0, pw - w), (0, 0)), mode="reflect")
    return padded, (h, w)


def analyze(padded, transform: TransformHandle = DEFAULT_TRANSFORM, orig_dims: tuple[int, int] | None = None) -> LatentTensor:
    padded = np.asarray(padded, dtype=float)
    if padded.ndim != 3 or padded.shape[0] % PAD_MULTIPLE or padded.shape[1] % PAD_MULTIPLE:
        raise CodecError(f"analysis input must be padded to multiples of {PAD_MULTIPLE}, got {padded.shape}")
    data = np.asarray(transform.forward(padded), dtype=float)
    expected = (transform.channels, padded.shape[0] // DOWNSAMPLE, padded.shape[1] // DOWNSAMPLE)
    if data.shape != expected:
        raise CodecError(f"transform produced {data.shape}, expected {expected}")
    h, w = orig_dims if orig_dims is not None else padded.shape[:2]
    return LatentTensor(data=data, orig_h=int(h), orig_w=int(w))


def synthesize(latent: LatentTensor, transform: TransformHandle = DEFAULT_TRANSFORM) -> np.ndarray:
    if latent.data.ndim != 3 or latent.m != transform.channels:
        raise CodecError(f"latent shape {latent.data.shape} does not fit the transform")
    full = np.asarray(transform.inverse(latent.data), dtype=float)
    if full.shape[:2] != (latent.lh * DOWNSAMPLE, latent.lw * DOWNSAMPLE):
        raise CodecError("synthesis output has the wrong spatial size")
    if latent.orig_h > full.shape[0] or latent.orig_w > full.shape[1]:
        raise CodecError("original dims exceed the latent's padded dims")
    return np.clip(full[: latent.orig_h, : latent.orig_w], 0.0, 1.0)


def quantize(latent: LatentTensor, n: int) -> QuantizedLatent:
    """Global min-max uniform quantizer, ties rounded half away from zero."""
    b = bits_per_element(n)
    y = latent.data
    if not np.all(np.isfinite(y)):
        raise CodecError("latent contains non-finite values")
    y_min, y_max = float(y.min()), float(y.max())
    top = (1 << b) - 1
    if y_max == y_min:
        levels = np.zeros(y.shape, dtype=np.int64)
    else:
        scaled = (y - y_min) / (y_max - y_min) * top
        levels = np.clip(np.floor(scaled + 0.5), 0, top).astype(np.int64)
    return QuantizedLatent(levels=levels, n=n, y_min=y_min, y_max=y_max, orig_h=latent.orig_h, orig_w=latent.orig_w)


def dequantize(q: QuantizedLatent) -> LatentTensor:
    top = (1 << q.b) - 1
    t = q.levels.astype(float) / top
    data = q.y_min * (1.0 - t) + q.y_max * t
    return LatentTensor(data=data, orig_h=q.orig_h, orig_w=q.orig_w)


def quantization_step(q: QuantizedLatent) -> float:
    return (q.y_max - q.y_min) / ((1 << q.b) - 1)


def encode(img, n: int, transform: TransformHandle = DEFAULT_TRANSFORM) -> QuantizedLatent:
    padded, dims = pad_reflect(img)
    return quantize(analyze(padded, transform, dims), n)


def decode(q: QuantizedLatent, transform: TransformHandle = DEFAULT_TRANSFORM) -> np.ndarray:
    return synthesize(dequantize(q), transform)


def to_wire(q: QuantizedLatent) -> tuple[bytes, SymbolStream]:
    """Side-information header plus the packed level stream.

    The header stores the extrema as float32; receivers dequantize with the
    rounded values.
    """
    m, lh, lw = q.shape
    header = _HEADER.pack(MAGIC, m, q.n, lh, lw, q.orig_h, q.orig_w, q.y_min, q.y_max)
    return header, pack_latent(q.levels.ravel(), q.n)


def from_wire(header: bytes, stream: SymbolStream) -> QuantizedLatent:
    if len(header) != HEADER_BYTES:
        raise DecodingError(f"header must be {HEADER_BYTES} bytes, got {len(header)}")
    magic, m, n, lh, lw, orig_h, orig_w, y_min, y_max = _HEADER.unpack(header)
    if magic != MAGIC:
        raise DecodingError("bad latent header magic")
    if n not in RATIOS or stream.n != n or stream.num_elements != m * lh * lw:
        raise DecodingError("stream metadata does not match header")
    flat = np.zeros(m * lh * lw, dtype=np.int64)
    got = unpack_latent(stream)
    flat[: got.size] = got
    return QuantizedLatent(levels=flat.reshape(m, lh, lw), n=n, y_min=float(y_min), y_max=float(y_max),
                           orig_h=orig_h, orig_w=orig_w)


def to_bytes(q: QuantizedLatent) -> bytes:
    """Full little-endian wire payload: header followed by packed words."""
    header, stream = to_wire(q)
    return header + stream.words.astype("<u4").tobytes()


def from_bytes(payload: bytes) -> QuantizedLatent:
    if len(payload) < HEADER_BYTES or (len(payload) - HEADER_BYTES) % 4:
        raise DecodingError("truncated latent payload")
    header = payload[:HEADER_BYTES]
    _, m, n, lh, lw, *_ = _HEADER.unpack(header)
    words = np.frombuffer(payload[HEADER_BYTES:], dtype="<u4").astype(np.uint32)
    return from_wire(header, SymbolStream(words=words, n=n, num_elements=m * lh * lw))
