"""Tokenization shared by command retrieval and coverage scoring."""

from __future__ import annotations

import re

_WORD = re.compile(r"[a-z0-9]+")


def normalize_token(tok: str) -> str:
    """Lowercase and strip a simple plural suffix (pedestrians -> pedestrian)."""
    tok = tok.lower()
    if len(tok) > 3 and tok.endswith("s") and not tok.endswith("ss"):
        return tok[:-1]
    return tok


def tokens(text: str) -> list[str]:
    return [normalize_token(t) for t in _WORD.findall(text.lower())]


def token_set(text: str) -> frozenset[str]:
    return frozenset(tokens(text))


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def normalize_answer(text: str) -> str:
    return " ".join(text.lower().split())
