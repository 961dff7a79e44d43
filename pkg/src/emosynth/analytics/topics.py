"""Topic graph: utterances linked by embedding similarity, clustered by modularity."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..dataset import DatasetExample
from ..errors import InvalidArgument
from .louvain import adjacency, louvain
from .similarity import Embed, cosine_matrix

TEXT_FIELDS = ("utterance_orig", "utterance_rewr", "context_orig", "context_clean")


@dataclass
class TopicGraph:
    nodes: list[str]
    edges: list[tuple[str, str]]
    communities: dict[str, int]
    modularity: float
    history: list[float] = field(default_factory=list)
    texts: dict[str, str] = field(default_factory=dict)

    @property
    def n_communities(self) -> int:
        return len(set(self.communities.values()))

    def sizes(self) -> Counter:
        return Counter(self.communities.values())

    def edge_list(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges)

    def membership_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "community"])
        for node in self.nodes:
            w.writerow([node, self.communities[node]])
        return buf.getvalue()

    def exemplars(self, k: int = 3) -> dict[int, list[str]]:
        """Highest-degree members per community, for naming clusters by hand."""
        degree = Counter()
        for u, v in self.edges:
            degree[u] += 1
            degree[v] += 1
        out: dict[int, list[str]] = {}
        for c, _ in sorted(self.sizes().items(), key=lambda kv: (-kv[1], kv[0])):
            members = [n for n in self.nodes if self.communities[n] == c]
            members.sort(key=lambda n: (-degree[n], n))
            out[c] = [self.texts.get(n, n) for n in members[:k]]
        return out


def build_topic_graph(
    examples: Sequence[DatasetExample],
    embed: Embed,
    edge_threshold: float = 0.6,
    text_field: str = "utterance_orig",
) -> TopicGraph:
    """Unweighted graph with an edge wherever cosine similarity exceeds the threshold."""
    if not 0.0 < edge_threshold < 1.0:
        raise InvalidArgument("edge_threshold must lie in (0, 1)")
    if text_field not in TEXT_FIELDS:
        raise InvalidArgument(f"text_field must be one of {TEXT_FIELDS}")
    rows = sorted((e for e in examples if getattr(e, text_field)), key=lambda e: e.example_id)
    if len(rows) < 2:
        raise InvalidArgument("topic graph needs at least 2 examples")
    texts = [getattr(e, text_field) for e in rows]
    sims = cosine_matrix(np.asarray(embed(texts), dtype=float))
    iu, ju = np.nonzero(np.triu(sims > edge_threshold, k=1))
    pairs = list(zip(iu.tolist(), ju.tolist()))
    result = louvain(adjacency(len(rows), pairs))
    ids = [e.example_id for e in rows]
    return TopicGraph(
        nodes=ids,
        edges=[(ids[i], ids[j]) for i, j in pairs],
        communities={ids[i]: c for i, c in enumerate(result.membership)},
        modularity=result.modularity,
        history=result.history,
        texts=dict(zip(ids, texts)),
    )
