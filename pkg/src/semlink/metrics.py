"""Task-level metrics and the bandwidth ledger summary."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MetricError
from .textutil import normalize_answer, tokens
from .transport import TransmissionRecord

PSNR_CAP_DB = 99.0
QUANTILES = (25, 50, 75)


def psnr(a, b) -> float:
    """PSNR in dB for images in [0, 1]; zero error maps to a 99 dB cap."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MetricError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise MetricError("cannot compare empty images")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def answer_matches(predicted: str, truths: Iterable[str]) -> bool:
    """Case-insensitive, whitespace-normalized exact match against any alternative."""
    p = normalize_answer(predicted)
    return any(p == normalize_answer(t) for t in truths)


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    predicted: str
    truths: tuple[str, ...]
    success: bool
    records: tuple[TransmissionRecord, ...] = ()
    coverage: float | None = None
    psnr_db: float | None = None
    extra: Mapping[str, object] = field(default_factory=dict)

    @classmethod
    def judge(cls, task_id: str, predicted: str, truths: Sequence[str], records=(), **kw) -> "TaskOutcome":
        truths = tuple(truths)
        return cls(task_id, predicted, truths, answer_matches(predicted, truths), tuple(records), **kw)

    @property
    def payload_bytes(self) -> int:
        return sum(r.payload_bytes for r in self.records)

    @property
    def complex_symbols(self) -> int:
        return sum(r.complex_symbols for r in self.records)


def success_rate(outcomes: Sequence[TaskOutcome]) -> float:
    if len(outcomes) == 0:
        raise MetricError("success rate of an empty outcome list")
    return sum(bool(o.success) for o in outcomes) / len(outcomes)


@lru_cache(maxsize=1)
def default_synonyms() -> dict[str, tuple[str, ...]]:
    text = resources.files("semlink").joinpath("data/synonyms.json").read_text()
    return {k: tuple(v) for k, v in json.loads(text).items()}


def _contains_seq(hay: list[str], needle: list[str]) -> bool:
    k = len(needle)
    return k > 0 and any(hay[i:i + k] == needle for i in range(len(hay) - k + 1))


def mentioned(response: str, category: str, synonyms: Mapping[str, Sequence[str]] | None = None) -> bool:
    synonyms = default_synonyms() if synonyms is None else synonyms
    hay = tokens(response)
    return any(_contains_seq(hay, tokens(name)) for name in (category, *synonyms.get(category, ())))


def object_coverage(response: str, categories: Iterable[str],
                    synonyms: Mapping[str, Sequence[str]] | None = None) -> float:
    """Fraction of categories named in ``response`` (directly or by synonym)."""
    cats = sorted(set(categories))
    if not cats:
        raise MetricError("coverage needs at least one category")
    return sum(mentioned(response, c, synonyms) for c in cats) / len(cats)


def _stats(values: list[int]) -> dict:
    arr = np.asarray(values, dtype=float)
    out = {"count": len(values), "total": int(sum(values)), "mean": float(arr.mean())}
    for q, v in zip(QUANTILES, np.percentile(arr, QUANTILES)):
        out[f"p{q}"] = float(v)
    return out


def bandwidth_summary(records: Sequence[TransmissionRecord]) -> dict:
    """Aggregate payload bytes and complex symbols, overall and per chain.

    Totals are exact integer sums over the ledger entries.
    """
    if len(records) == 0:
        raise MetricError("bandwidth summary of an empty ledger")
    by_chain: dict[str, list[TransmissionRecord]] = {}
    for r in records:
        by_chain.setdefault(r.chain, []).append(r)
    summary = {
        "count": len(records),
        "total_bytes": sum(r.payload_bytes for r in records),
        "total_symbols": sum(r.complex_symbols for r in records),
        "chains": {},
    }
    summary["mean_bytes"] = summary["total_bytes"] / len(records)
    summary["mean_symbols"] = summary["total_symbols"] / len(records)
    for chain in sorted(by_chain):
        recs = by_chain[chain]
        summary["chains"][chain] = {
            "bytes": _stats([r.payload_bytes for r in recs]),
            "symbols": _stats([r.complex_symbols for r in recs]),
            "delivery_rate": sum(r.delivered for r in recs) / len(recs),
        }
    return summary
