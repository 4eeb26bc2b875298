"""Frequency-selective OFDM channel and effective-SNR link abstraction.

A channel realization holds one complex gain per active subcarrier.  The
per-subcarrier SNRs are collapsed into a single AWGN-equivalent effective
SNR with the exponential mapping (EESM), and the effective SNR is mapped to
a block error probability through an erfc-shaped waterfall curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import ParameterError

__all__ = [
    "ChannelRealization",
    "LinkAbstractionConfig",
    "sample_channel",
    "flat_channel",
    "eesm",
    "bler",
    "db_to_linear",
    "linear_to_db",
]


def db_to_linear(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    """10*log10(x); returns -inf for zero instead of warning."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    tx_snr_db: float
    snrs_linear: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=complex)
        snrs = np.asarray(self.snrs_linear, dtype=float)
        if gains.ndim != 1 or gains.size < 1:
            raise ParameterError("gains must be a nonempty vector")
        if snrs.shape != gains.shape:
            raise ParameterError("snrs_linear and gains must have the same length")
        if np.any(snrs < 0):
            raise ParameterError("per-subcarrier SNRs must be non-negative")
        gains.setflags(write=False)
        snrs.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "snrs_linear", snrs)

    @property
    def k(self) -> int:
        return int(self.gains.size)


@dataclass(frozen=True)
class LinkAbstractionConfig:
    """EESM beta and the BLER waterfall (threshold/slope in dB)."""

    beta: float = 5.0
    bler_threshold_db: float = 4.0
    bler_slope_db: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if not self.bler_slope_db > 0:
            raise ParameterError(f"bler_slope_db must be positive, got {self.bler_slope_db}")


def sample_channel(seed: int, k: int, num_taps: int, tx_snr_db: float) -> ChannelRealization:
    """Draw a block-fading Rayleigh channel.

    ``num_taps`` i.i.d. circular complex Gaussian taps share unit total
    average power; the gains are their ``k``-point DFT.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError(f"K must be a positive integer, got {k!r}")
    if not isinstance(num_taps, (int, np.integer)) or not 1 <= num_taps <= k:
        raise ParameterError(f"num_taps must lie in [1, K={k}], got {num_taps!r}")
    rng = np.random.default_rng(seed)
    taps = (rng.standard_normal(num_taps) + 1j * rng.standard_normal(num_taps)) / math.sqrt(2 * num_taps)
    gains = np.fft.fft(taps, n=int(k))
    snrs = np.abs(gains) ** 2 * db_to_linear(tx_snr_db)
    return ChannelRealization(gains=gains, tx_snr_db=float(tx_snr_db), snrs_linear=snrs, seed=seed)


def flat_channel(k: int, tx_snr_db: float) -> ChannelRealization:
    """Unit-gain (AWGN) channel; its effective SNR equals the transmit SNR."""
    if k < 1:
        raise ParameterError(f"K must be a positive integer, got {k!r}")
    gains = np.ones(int(k), dtype=complex)
    snrs = np.full(int(k), float(db_to_linear(tx_snr_db)))
    return ChannelRealization(gains=gains, tx_snr_db=float(tx_snr_db), snrs_linear=snrs)


def eesm(snrs_linear, beta: float) -> float:
    """Exponential effective SNR mapping, linear in and linear out.

    Evaluated with a log-sum-exp shift by the minimum SNR so that large
    SNR/beta ratios neither underflow nor lose the flat-channel identity.
    """
    snrs = np.asarray(snrs_linear, dtype=float).ravel()
    if snrs.size == 0:
        raise ParameterError("eesm needs at least one subcarrier SNR")
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if np.any(snrs < 0) or not np.all(np.isfinite(snrs)):
        raise ParameterError("SNRs must be finite and non-negative")
    s_min = snrs.min()
    mean_exp = np.mean(np.exp(-(snrs - s_min) / beta))
    esnr = s_min - beta * math.log(mean_exp)
    # rounding can push the result a few ulps outside [min, max]
    return float(min(max(esnr, s_min), snrs.max()))


def bler(esnr_linear: float, cfg: LinkAbstractionConfig) -> float:
    """Block error probability of one OFDM frame at the given effective SNR."""
    if esnr_linear < 0:
        raise ParameterError("effective SNR must be non-negative")
    if esnr_linear == 0:
        return 1.0
    esnr_db = 10.0 * math.log10(esnr_linear)
    p = 0.5 * float(erfc((esnr_db - cfg.bler_threshold_db) / cfg.bler_slope_db))
    return min(1.0, max(0.0, p))
