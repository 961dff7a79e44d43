"""Greedy embedding near-duplicate filter."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..dataset import DatasetExample
from ..errors import InvalidArgument
from .similarity import Embed


@dataclass
class DedupResult:
    retained: list[str]
    dropped: list[tuple[str, str, float]] = field(default_factory=list)

    def lines(self) -> list[str]:
        return [f"retained={len(self.retained)} dropped={len(self.dropped)}"] + [
            f"drop {a} near {b} sim={s:.4f}" for a, b, s in self.dropped
        ]


def near_duplicate_filter(
    items: Mapping[str, str] | Sequence[DatasetExample],
    embed: Embed,
    cutoff: float,
    text_field: str = "utterance_orig",
) -> DedupResult:
    """Walk ids in sorted order; drop an item whose similarity to any kept item exceeds ``cutoff``.

    Dropped entries are reported as ``(dropped_id, closest_kept_id, similarity)``.
    """
    if not 0.0 < cutoff <= 1.0:
        raise InvalidArgument("cutoff must lie in (0, 1]")
    if isinstance(items, Mapping):
        pairs = sorted(items.items())
    else:
        pairs = sorted((e.example_id, getattr(e, text_field)) for e in items if getattr(e, text_field))
    if not pairs:
        return DedupResult([])
    ids = [p[0] for p in pairs]
    texts = [p[1] for p in pairs]
    vecs = np.asarray(embed(texts), dtype=float)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    unit = vecs / norms

    kept: list[int] = []
    result = DedupResult([])
    for i in range(len(ids)):
        if kept:
            sims = np.clip(unit[kept] @ unit[i], -1.0, 1.0)
            for pos, k in enumerate(kept):
                if texts[k] == texts[i] or np.array_equal(vecs[k], vecs[i]):
                    sims[pos] = 1.0
            best = int(np.argmax(sims))
            if sims[best] > cutoff:
                result.dropped.append((ids[i], ids[kept[best]], float(sims[best])))
                continue
        kept.append(i)
    result.retained = [ids[i] for i in kept]
    return result
