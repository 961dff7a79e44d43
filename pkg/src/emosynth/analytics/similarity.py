"""Pairwise cosine-similarity studies over utterances and contexts."""

from __future__ import annotations

import math
import random
import statistics
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ..dataset import DatasetExample
from ..errors import InvalidArgument
from ..taxonomy import NEUTRAL

Embed = Callable[[list[str]], Sequence[Sequence[float]]]

PAIRINGS = (
    "random-utterances",
    "random-neutral",
    "same-actor-neutral",
    "same-actor-contexts",
    "cross-actor-contexts",
    "cross-story-contexts",
    "orig-vs-clean",
    "orig-vs-rewr",
)


@dataclass(frozen=True)
class SimilarityStats:
    pairing: str
    mean: float
    std: float
    q99: float
    sample_size: int

    def row(self) -> dict:
        return {"pairing": self.pairing, "mean": self.mean, "std": self.std,
                "q99": self.q99, "n": self.sample_size}

    def summary(self) -> str:
        return f"{self.pairing}: mu={self.mean:.3f} sigma={self.std:.3f} q99={self.q99:.3f} n={self.sample_size}"


class EmbeddingCache:
    """Embeds each distinct text once, in batches."""

    def __init__(self, embed: Embed, batch_size: int = 256):
        self.embed = embed
        self.batch_size = batch_size
        self._vecs: dict[str, np.ndarray] = {}

    def ensure(self, texts: Sequence[str]) -> None:
        todo = list(dict.fromkeys(t for t in texts if t not in self._vecs))
        for i in range(0, len(todo), self.batch_size):
            chunk = todo[i : i + self.batch_size]
            for t, v in zip(chunk, self.embed(chunk)):
                self._vecs[t] = np.asarray(v, dtype=float)

    def __getitem__(self, text: str) -> np.ndarray:
        if text not in self._vecs:
            self.ensure([text])
        return self._vecs[text]

    def cosine(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        va, vb = self[a], self[b]
        if np.array_equal(va, vb):
            return 1.0
        na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return min(1.0, max(-1.0, float(va @ vb) / (na * nb)))


def nearest_rank(values: Sequence[float], q: float = 0.99) -> float:
    """Nearest-rank percentile: the ceil(q*n)-th smallest value."""
    if not values:
        raise InvalidArgument("percentile of an empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(Fraction(str(q)) * len(ordered)))
    return ordered[rank - 1]


def summarize(pairing: str, sims: Sequence[float]) -> SimilarityStats:
    if not sims:
        raise InvalidArgument(f"pairing {pairing!r} produced no pairs")
    mean = math.fsum(sims) / len(sims)
    std = statistics.pstdev(sims) if len(sims) > 1 else 0.0
    return SimilarityStats(pairing, mean, std, nearest_rank(sims), len(sims))


# -- pair sampling ---------------------------------------------------------


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _decode_pair(k: int, n: int) -> tuple[int, int]:
    """Inverse of row-major enumeration of pairs (i < j) over ``n`` items."""
    # row i starts at offset i*n - i*(i+1)/2
    i = n - 2 - (math.isqrt(8 * (_pair_count(n) - 1 - k) + 1) - 1) // 2
    while i > 0 and i * n - i * (i + 1) // 2 > k:
        i -= 1
    while (i + 1) * n - (i + 1) * (i + 2) // 2 <= k:
        i += 1
    j = k - (i * n - i * (i + 1) // 2) + i + 1
    return i, j


class PairSpace:
    """All unordered pairs within each block, addressable by a flat index."""

    def __init__(self, blocks: Sequence[Sequence[int]]):
        self.blocks = [list(b) for b in blocks if len(b) >= 2]
        self.offsets = [0]
        for b in self.blocks:
            self.offsets.append(self.offsets[-1] + _pair_count(len(b)))

    def __len__(self) -> int:
        return self.offsets[-1]

    def __getitem__(self, k: int) -> tuple[int, int]:
        bi = bisect_right(self.offsets, k) - 1
        block = self.blocks[bi]
        i, j = _decode_pair(k - self.offsets[bi], len(block))
        return block[i], block[j]


def sample_pairs(
    space: PairSpace,
    n: int,
    rng: random.Random,
    accept: Callable[[int, int], bool] | None = None,
    eligible: int | None = None,
) -> list[tuple[int, int]]:
    """Up to ``n`` distinct pairs from ``space``, without replacement.

    ``accept`` restricts the space; ``eligible`` is the number of pairs it
    admits. When every eligible pair fits in the sample they are enumerated,
    otherwise candidates are drawn by rejection.
    """
    total = len(space)
    eligible = total if eligible is None else eligible
    if eligible <= n:
        return [p for p in (space[k] for k in range(total)) if accept is None or accept(*p)]
    if accept is None:
        return [space[k] for k in rng.sample(range(total), n)]
    seen: set[int] = set()
    out = []
    while len(out) < n:
        k = rng.randrange(total)
        if k in seen:
            continue
        seen.add(k)
        p = space[k]
        if accept(*p):
            out.append(p)
    return out


def _groups(rows: Sequence[DatasetExample], key) -> list[list[int]]:
    g: dict = defaultdict(list)
    for i, ex in enumerate(rows):
        g[key(ex)].append(i)
    return [g[k] for k in sorted(g)]


def similarity_stats(
    pairing: str,
    examples: Sequence[DatasetExample],
    embed: Embed | EmbeddingCache,
    sample: int = 10_000,
    seed: int = 0,
) -> SimilarityStats:
    """Cosine statistics for one named pairing.

    Context pairings compare the cleaned contexts. Pairs are drawn without
    replacement and the sample is a pure function of (examples, seed).
    """
    if pairing not in PAIRINGS:
        raise InvalidArgument(f"unknown pairing {pairing!r}; expected one of {', '.join(PAIRINGS)}")
    if sample < 1:
        raise InvalidArgument("sample must be >= 1")
    cache = embed if isinstance(embed, EmbeddingCache) else EmbeddingCache(embed)
    rng = random.Random(seed)
    rows = sorted(examples, key=lambda e: e.example_id)

    if pairing in ("orig-vs-clean", "orig-vs-rewr"):
        if pairing == "orig-vs-clean":
            texts = [(e.context_orig, e.context_clean) for e in rows if e.context_clean]
        else:
            texts = [(e.utterance_orig, e.utterance_rewr) for e in rows if e.utterance_rewr]
        if not texts:
            raise InvalidArgument(f"pairing {pairing!r} needs context-full rows")
        if len(texts) > sample:
            texts = [texts[i] for i in sorted(rng.sample(range(len(texts)), sample))]
        cache.ensure([t for p in texts for t in p])
        return summarize(pairing, [cache.cosine(a, b) for a, b in texts])

    accept = None
    eligible = None
    if pairing in ("random-utterances", "random-neutral", "same-actor-neutral"):
        if pairing != "random-utterances":
            rows = [e for e in rows if e.primary_emotion == NEUTRAL]
        texts = [e.utterance_orig for e in rows]
        if pairing == "same-actor-neutral":
            space = PairSpace(_groups(rows, lambda e: (e.plot_id, e.actor)))
        else:
            space = PairSpace([range(len(rows))])
    else:
        rows = [e for e in rows if e.context_clean]
        texts = [e.context_clean for e in rows]
        actor_groups = _groups(rows, lambda e: (e.plot_id, e.actor))
        plot_groups = _groups(rows, lambda e: e.plot_id)
        if pairing == "same-actor-contexts":
            space = PairSpace(actor_groups)
        elif pairing == "cross-actor-contexts":
            space = PairSpace(plot_groups)
            accept = lambda i, j: rows[i].actor != rows[j].actor  # noqa: E731
            eligible = len(space) - len(PairSpace(actor_groups))
        else:
            space = PairSpace([range(len(rows))])
            accept = lambda i, j: rows[i].plot_id != rows[j].plot_id  # noqa: E731
            eligible = len(space) - len(PairSpace(plot_groups))
    if (len(space) if eligible is None else eligible) < 1:
        raise InvalidArgument(f"pairing {pairing!r} has no eligible pairs")
    pairs = sample_pairs(space, sample, rng, accept, eligible)
    cache.ensure(sorted({texts[i] for p in pairs for i in p}))
    return summarize(pairing, [cache.cosine(texts[i], texts[j]) for i, j in pairs])


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    unit = vectors / norms
    return np.clip(unit @ unit.T, -1.0, 1.0)
