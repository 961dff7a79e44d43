"""Louvain-style modularity maximisation.

Graphs are symmetric adjacency maps over node ids ``0..n-1``. With integer
edge weights every gain comparison is exact integer arithmetic, so a local
move is taken only when it strictly raises modularity and the per-phase
history is non-decreasing without rounding noise.

Convention: ``A[i][i]`` holds twice the self-loop weight, ``k_i`` is the row
sum and ``2m`` the total, so ``Q = (1/2m) * sum_ij (A_ij - k_i k_j / 2m) [c_i = c_j]``.
Aggregating communities into nodes preserves degrees and ``Q``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

Adjacency = list[dict[int, float]]


def adjacency(n: int, edges: Iterable[tuple[int, int]] | Iterable[tuple[int, int, float]]) -> Adjacency:
    adj: Adjacency = [defaultdict(int) for _ in range(n)]
    for e in edges:
        u, v = e[0], e[1]
        w = e[2] if len(e) > 2 else 1
        if u == v:
            adj[u][u] += 2 * w
        else:
            adj[u][v] += w
            adj[v][u] += w
    return [dict(a) for a in adj]


def _degrees(adj: Adjacency) -> list:
    return [sum(a.values()) for a in adj]


def modularity(adj: Adjacency, membership: Sequence[int]) -> float:
    deg = _degrees(adj)
    m2 = sum(deg)
    if not m2:
        return 0.0
    internal = defaultdict(int)
    tot = defaultdict(int)
    for i, row in enumerate(adj):
        tot[membership[i]] += deg[i]
        for j, w in row.items():
            if membership[j] == membership[i]:
                internal[membership[i]] += w
    exact = all(isinstance(x, Rational) for x in deg)
    if exact:
        q = sum(Fraction(internal[c], m2) - Fraction(tot[c] * tot[c], m2 * m2) for c in tot)
        return float(q)
    return sum(internal[c] / m2 - (tot[c] / m2) ** 2 for c in tot)


def _local_moves(adj: Adjacency, max_passes: int) -> tuple[list[int], bool]:
    n = len(adj)
    deg = _degrees(adj)
    m2 = sum(deg)
    comm = list(range(n))
    tot = list(deg)
    moved_any = False
    for _ in range(max_passes):
        moved = False
        for i in range(n):
            ci = comm[i]
            links: dict[int, float] = defaultdict(int)
            for j, w in adj[i].items():
                if j != i:
                    links[comm[j]] += w
            tot[ci] -= deg[i]
            # gain of joining c, scaled by 2m: links[c]*2m - k_i*tot[c]
            best_c = ci
            best_gain = links.get(ci, 0) * m2 - deg[i] * tot[ci]
            for c in sorted(links):
                gain = links[c] * m2 - deg[i] * tot[c]
                if gain > best_gain:
                    best_c, best_gain = c, gain
            tot[best_c] += deg[i]
            if best_c != ci:
                comm[i] = best_c
                moved = moved_any = True
        if not moved:
            break
    return comm, moved_any


def _relabel(comm: Sequence[int]) -> list[int]:
    ids: dict[int, int] = {}
    return [ids.setdefault(c, len(ids)) for c in comm]


def _aggregate(adj: Adjacency, comm: Sequence[int], k: int) -> Adjacency:
    out: Adjacency = [defaultdict(int) for _ in range(k)]
    for i, row in enumerate(adj):
        for j, w in row.items():
            out[comm[i]][comm[j]] += w
    return [dict(a) for a in out]


@dataclass
class LouvainResult:
    membership: list[int]
    modularity: float
    history: list[float] = field(default_factory=list)

    @property
    def communities(self) -> list[list[int]]:
        groups: dict[int, list[int]] = defaultdict(list)
        for node, c in enumerate(self.membership):
            groups[c].append(node)
        return [groups[c] for c in sorted(groups)]


def louvain(adj: Adjacency, max_levels: int = 32, max_passes: int = 100) -> LouvainResult:
    """Two-phase Louvain until no local move improves modularity.

    Nodes are visited in id order and ties go to the current community, then
    to the smallest community id, so the result is deterministic.
    ``history[0]`` is the singleton partition; one entry follows per level.
    """
    n = len(adj)
    membership = list(range(n))
    history = [modularity(adj, membership)]
    level_adj = adj
    for _ in range(max_levels):
        comm, moved = _local_moves(level_adj, max_passes)
        if not moved:
            break
        comm = _relabel(comm)
        membership = [comm[c] for c in membership]
        level_adj = _aggregate(level_adj, comm, max(comm) + 1)
        history.append(modularity(adj, membership))
    membership = _relabel(membership)
    return LouvainResult(membership, history[-1], history)
