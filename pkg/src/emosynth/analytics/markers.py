"""Marker words: tokens that rewriting strips out, and the emotions they travel with."""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from ..dataset import DatasetExample
from ..errors import InvalidArgument
from ..taxonomy import NEUTRAL, Taxonomy, default_taxonomy

# letters/digits of any script, apostrophes kept inside words ("don't")
TOKEN = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


def tokenize(text: str) -> list[str]:
    return TOKEN.findall(text.casefold().replace("’", "'"))


@dataclass(frozen=True)
class MarkerRow:
    orig: str
    rewr: str
    labels: frozenset[str]


def rows_from_examples(examples: Iterable[DatasetExample]) -> list[MarkerRow]:
    return [
        MarkerRow(e.utterance_orig, e.utterance_rewr, frozenset(e.labels))
        for e in examples
        if e.utterance_rewr is not None
    ]


@dataclass
class MarkerEntry:
    word: str
    occurrences: int
    removed: int
    removal_ratio: float
    emotions: dict[str, float]
    group_strength: dict[str, float]

    def row(self) -> dict:
        return {
            "word": self.word,
            "occurrences": self.occurrences,
            "removed": self.removed,
            "removal_ratio": self.removal_ratio,
            "emotions": ";".join(self.emotions),
            **{f"group.{g}": s for g, s in self.group_strength.items()},
        }


@dataclass
class MarkerLexicon:
    entries: list[MarkerEntry]
    removal_threshold: float
    cooccur_threshold: float
    overlap: dict[str, dict[str, int]] = field(default_factory=dict)

    def words(self) -> list[str]:
        return [e.word for e in self.entries]

    def __getitem__(self, word: str) -> MarkerEntry:
        for e in self.entries:
            if e.word == word:
                return e
        raise KeyError(word)

    def by_group(self, group: str, top: int = 10) -> list[tuple[str, float]]:
        """Markers ranked by strength for one group, like one column of a marker table."""
        ranked = [(e.word, e.group_strength[group]) for e in self.entries if e.group_strength.get(group)]
        ranked.sort(key=lambda kv: (-kv[1], kv[0]))
        return ranked[:top]


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def extract_markers(
    rows: Sequence[MarkerRow],
    removal_threshold: float = 0.6,
    cooccur_threshold: float = 0.05,
    vocabulary: Iterable[str] | None = None,
    taxonomy: Taxonomy | None = None,
) -> MarkerLexicon:
    """Words removed in at least ``removal_threshold`` of their Orig occurrences.

    Removal per row is the multiset difference ``max(0, n_orig - n_rewr)``.
    An emotion is attached when rows carrying it hold at least
    ``cooccur_threshold`` of the word's Orig occurrences. Group strength is
    the group's share of the word's non-neutral co-occurrences. Both
    thresholds are compared as exact decimals.
    """
    if not rows:
        raise InvalidArgument("marker extraction needs a non-empty corpus")
    tax = taxonomy or default_taxonomy()
    vocab = {w.casefold() for w in vocabulary} if vocabulary is not None else None
    r_th, c_th = _exact(removal_threshold), _exact(cooccur_threshold)

    occurrences: Counter = Counter()
    removed: Counter = Counter()
    cooc: dict[str, Counter] = defaultdict(Counter)
    for row in rows:
        if row.rewr is None:
            raise InvalidArgument("every row needs both Orig and Rewr text")
        orig, rewr = Counter(tokenize(row.orig)), Counter(tokenize(row.rewr))
        for word, n in orig.items():
            occurrences[word] += n
            removed[word] += max(0, n - rewr[word])
            for e in row.labels:
                cooc[word][e] += n

    entries = []
    for word in sorted(occurrences):
        if vocab is not None and word not in vocab:
            continue
        total = occurrences[word]
        ratio = Fraction(removed[word], total)
        if ratio < r_th:
            continue
        emotions = {
            e: cooc[word][e] / total
            for e in tax.emotional_names
            if cooc[word][e] and Fraction(cooc[word][e], total) >= c_th
        }
        emotional_total = sum(n for e, n in cooc[word].items() if e != NEUTRAL)
        strength = {
            g.name: (sum(cooc[word][m] for m in g.members) / emotional_total if emotional_total else 0.0)
            for g in tax.groups
        }
        entries.append(MarkerEntry(word, total, removed[word], float(ratio), emotions, strength))

    overlap: dict[str, dict[str, int]] = {a: {b: 0 for b in tax.emotional_names} for a in tax.emotional_names}
    for entry in entries:
        for a in entry.emotions:
            for b in entry.emotions:
                overlap[a][b] += 1
    return MarkerLexicon(entries, removal_threshold, cooccur_threshold, overlap)
