"""Partial Levenshtein (indel) ratio via bit-parallel LCS."""

from __future__ import annotations


def _match_masks(pattern: str) -> dict[str, int]:
    masks: dict[str, int] = {}
    for i, ch in enumerate(pattern):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    return masks


def _lcs(masks: dict[str, int], m: int, text: str) -> int:
    # Hyyro's bit-vector LCS: zero bits of V count matched pattern positions
    full = (1 << m) - 1
    v = full
    for ch in text:
        u = v & masks.get(ch, 0)
        v = ((v + u) | (v - u)) & full
    return m - bin(v).count("1")


def lcs_length(a: str, b: str) -> int:
    if not a or not b:
        return 0
    return _lcs(_match_masks(a), len(a), b)


def ratio(a: str, b: str) -> float:
    """Normalised indel similarity ``2 * LCS / (len(a) + len(b))``."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2 * lcs_length(a, b) / total


def partial_levenshtein_ratio(a: str, b: str) -> float:
    """Best :func:`ratio` between the shorter string and any same-length window of the longer.

    Symmetric in its arguments. Two empty strings score 1.0 and one empty
    string against a non-empty one scores 0.0.
    """
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    m = len(short)
    if m == 0:
        return 1.0 if not long_ else 0.0
    masks = _match_masks(short)
    best = 0
    for start in range(len(long_) - m + 1):
        best = max(best, _lcs(masks, m, long_[start : start + m]))
        if best == m:
            break
    return 2 * best / (2 * m)
