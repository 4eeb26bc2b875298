"""Physical-layer transport chains.

Two ways to move a payload over a :class:`ChannelRealization`:

* the *baseline* chain (source-coded bytes, rate-r channel code, QAM): the
  payload is split over OFDM frames and each frame is erased with
  probability ``bler(ESNR)``.  Delivery is all or nothing.
* the *semantic* chain: quantized latent levels are packed ``n`` per 32-bit
  word, two words per complex symbol, and every packed bit is flipped with
  the Gray-coded QAM bit error probability of the subcarrier it rides on.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erfc

from .channel import ChannelRealization, LinkAbstractionConfig, bler, eesm, linear_to_db
from .errors import DecodingError, EncodingError, ParameterError

RATIOS = (2, 4, 8, 16)
HEADER_BYTES = 32
CSV_FIELDS = ("chain", "payload_bytes", "complex_symbols", "ofdm_frames", "esnr_db", "delivered")


def bits_per_element(n: int) -> int:
    if n not in RATIOS:
        raise EncodingError(f"compression ratio must be one of {RATIOS}, got {n!r}")
    return 32 // n


def num_complex_symbols(num_elements: int, n: int) -> int:
    return num_elements // (2 * n)


def ofdm_frames(n_sym: int, k: int) -> int:
    """OFDM symbols needed for ``n_sym`` complex symbols on ``k`` subcarriers."""
    if k < 1:
        raise ParameterError(f"K must be >= 1, got {k}")
    if n_sym < 0:
        raise ParameterError(f"symbol count must be >= 0, got {n_sym}")
    return -(-n_sym // k)


@dataclass(frozen=True)
class SymbolStream:
    words: np.ndarray  # uint32, two per complex symbol
    n: int
    num_elements: int

    @property
    def bits_per_element(self) -> int:
        return 32 // self.n

    @property
    def num_complex_symbols(self) -> int:
        return num_complex_symbols(self.num_elements, self.n)

    @property
    def payload_bytes(self) -> int:
        return HEADER_BYTES + 4 * int(self.words.size)

    def validate(self) -> None:
        if self.n not in RATIOS:
            raise DecodingError(f"invalid compression ratio {self.n!r}")
        if self.num_elements < 0:
            raise DecodingError("negative element count")
        if self.words.ndim != 1 or self.words.size != 2 * self.num_complex_symbols:
            raise DecodingError(
                f"stream holds {self.words.size} words, expected {2 * self.num_complex_symbols} "
                f"for L={self.num_elements}, n={self.n}"
            )


@dataclass(frozen=True)
class TransmissionRecord:
    chain: str
    payload_bytes: int
    complex_symbols: int
    ofdm_frames: int
    delivered: bool
    esnr_db: float

    def as_row(self) -> dict:
        row = asdict(self)
        return {key: row[key] for key in CSV_FIELDS}


def pack_latent(levels, n: int) -> SymbolStream:
    """Pack ``b = 32/n``-bit levels into 32-bit words, first element in the MSBs.

    Elements past the last full complex symbol (``2n`` elements) are dropped.
    """
    b = bits_per_element(n)
    levels = np.asarray(levels)
    if levels.size and not np.issubdtype(levels.dtype, np.integer):
        if not np.all(np.mod(levels, 1) == 0):
            raise EncodingError("levels must be integers")
    levels = levels.astype(np.int64).ravel()
    if levels.size and (levels.min() < 0 or levels.max() >= 1 << b):
        raise EncodingError(f"levels must lie in [0, {(1 << b) - 1}] for n={n}")
    total = levels.size
    n_sym = num_complex_symbols(total, n)
    kept = levels[: 2 * n * n_sym].astype(np.uint64).reshape(-1, n)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64) * np.uint64(b)
    words = np.bitwise_or.reduce(kept << shifts, axis=1) if kept.size else np.zeros(0, np.uint64)
    return SymbolStream(words=words.astype(np.uint32), n=n, num_elements=total)


def unpack_latent(stream: SymbolStream) -> np.ndarray:
    """Inverse of :func:`pack_latent` on the retained ``2n * N_sym`` prefix."""
    stream.validate()
    n, b = stream.n, stream.bits_per_element
    if stream.words.size == 0:
        return np.zeros(0, dtype=np.int64)
    words = stream.words.astype(np.uint64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64) * np.uint64(b)
    mask = np.uint64((1 << b) - 1)
    return ((words >> shifts) & mask).astype(np.int64).ravel()


def _q(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _edge_arg(edge, pos, x):
    # outer region edges stay at +-inf even when x == 0
    with np.errstate(invalid="ignore"):
        arg = (edge[None, :] - pos[:, None]) * x
    return np.where(np.isfinite(edge)[None, :], arg, edge[None, :])


def qam_bit_error_rate(snr_linear, order: int = 16):
    """Exact bit error probability of Gray-coded square M-QAM over AWGN.

    Each quadrature branch is a Gray-labelled sqrt(M)-PAM; the error rate of
    every label bit is summed over the decision regions where it differs.
    ``snr_linear`` is the symbol SNR Es/N0.  At zero SNR this returns 0.5.
    """
    m = int(round(math.sqrt(order)))
    if m * m != order or m < 2 or m & (m - 1):
        raise ParameterError(f"order must be a square power of 4, got {order}")
    bits = int(math.log2(m))
    snr = np.asarray(snr_linear, dtype=float)
    x = np.sqrt(3.0 * snr / (order - 1))[..., None, None]  # half-spacing / sigma
    idx = np.arange(m)
    gray = idx ^ (idx >> 1)
    pos = 2 * idx - (m - 1)  # in units of half-spacing
    lo = np.where(idx == 0, -np.inf, 2 * idx - m).astype(float)
    hi = np.where(idx == m - 1, np.inf, 2 * idx - m + 2).astype(float)
    # p[i, j] = P(decide j | sent i)
    p = _q(_edge_arg(lo, pos, x)) - _q(_edge_arg(hi, pos, x))
    total = np.zeros(snr.shape)
    for bit in range(bits):
        differs = ((gray[:, None] ^ gray[None, :]) >> bit) & 1
        total = total + np.sum(p * differs, axis=(-2, -1))
    ber = total / (m * bits)
    return float(ber) if ber.ndim == 0 else ber


def qam_bit_error_rate_approx(snr_linear, order: int = 16):
    """Nearest-neighbour approximation, accurate at moderate-to-high SNR."""
    m = math.sqrt(order)
    snr = np.asarray(snr_linear, dtype=float)
    return (m - 1) / (m * math.log2(m)) * erfc(np.sqrt(3.0 * snr / (2.0 * (order - 1))))


def semantic_transmit(
    stream: SymbolStream,
    ch: ChannelRealization,
    rng_seed: int,
    *,
    modulation_order: int = 16,
) -> SymbolStream:
    """Flip packed bits according to the subcarrier each bit is mapped to.

    Bit ``i`` of the MSB-first bit string rides on subcarrier ``i mod K``.
    Stream metadata is carried error-free.
    """
    stream.validate()
    if stream.words.size == 0:
        raise ParameterError("cannot transmit an empty symbol stream")
    p_sub = np.atleast_1d(qam_bit_error_rate(ch.snrs_linear, modulation_order))
    raw = stream.words.astype(">u4").view(np.uint8)
    bits = np.unpackbits(raw)
    p_bit = np.resize(p_sub, bits.size)
    rng = np.random.default_rng(rng_seed)
    flips = rng.random(bits.size) < p_bit
    out = np.packbits(bits ^ flips.astype(np.uint8)).view(">u4").astype(np.uint32)
    return SymbolStream(words=out, n=stream.n, num_elements=stream.num_elements)


def effective_snr_db(ch: ChannelRealization, link: LinkAbstractionConfig) -> float:
    return float(linear_to_db(eesm(ch.snrs_linear, link.beta)))


def semantic_record(stream: SymbolStream, ch: ChannelRealization, link: LinkAbstractionConfig) -> TransmissionRecord:
    """Ledger entry for a semantic transmission (always delivered, maybe impaired)."""
    n_sym = stream.num_complex_symbols
    return TransmissionRecord(
        chain="semantic",
        payload_bytes=stream.payload_bytes,
        complex_symbols=n_sym,
        ofdm_frames=ofdm_frames(n_sym, ch.k),
        delivered=True,
        esnr_db=effective_snr_db(ch, link),
    )


def baseline_transmit(
    payload_bytes: int,
    ch: ChannelRealization,
    rate: float,
    bits_per_symbol: int,
    rng_seed: int,
    *,
    link: LinkAbstractionConfig | None = None,
    chain: str = "baseline",
) -> TransmissionRecord:
    """Channel-coded digital transmission with all-or-nothing delivery."""
    if payload_bytes < 1:
        raise ParameterError("payload must be at least one byte")
    if not 0 < rate <= 1:
        raise ParameterError(f"code rate must lie in (0, 1], got {rate}")
    if bits_per_symbol not in (2, 4, 6, 8):
        raise ParameterError(f"bits_per_symbol must be 2, 4, 6 or 8, got {bits_per_symbol}")
    link = link or LinkAbstractionConfig()
    coded_bits = payload_bytes * 8 / rate
    n_sym = math.ceil(round(coded_bits / bits_per_symbol, 9))
    frames = ofdm_frames(n_sym, ch.k)
    esnr = eesm(ch.snrs_linear, link.beta)
    p_frame = bler(esnr, link)
    rng = np.random.default_rng(rng_seed)
    errors = int(np.count_nonzero(rng.random(frames) < p_frame))
    return TransmissionRecord(
        chain=chain,
        payload_bytes=int(payload_bytes),
        complex_symbols=n_sym,
        ofdm_frames=frames,
        delivered=errors == 0,
        esnr_db=float(linear_to_db(esnr)),
    )


def text_transmit(text: str, ch: ChannelRealization, rng_seed: int, *, rate: float = 0.5,
                  bits_per_symbol: int = 4, link: LinkAbstractionConfig | None = None) -> TransmissionRecord:
    """Send a UTF-8 string over the baseline chain (empty strings cost one byte)."""
    size = max(1, len(text.encode("utf-8")))
    return baseline_transmit(size, ch, rate, bits_per_symbol, rng_seed, link=link, chain="text")
