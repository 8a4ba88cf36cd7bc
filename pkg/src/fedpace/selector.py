"""Representational filtering: pick a small representative, diverse subset
of a pool using a cosine kNN graph.

score(u) sums, over the samples x that count u among their k nearest
neighbors, a diversity discount rho^-(number of x's neighbors already
selected). Greedy selection by this score prefers hubs first and then
spreads out. The selector only ever sees embeddings, never labels, so it
can run before any training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Rng


@dataclass(frozen=True)
class SelectorConfig:
    k: int = 10
    rho: float = 2.0
    budget_fraction: float = 0.05

    def __post_init__(self):
        if self.rho <= 1.0:
            raise ValueError("rho must be > 1")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValueError("budget_fraction must be in (0, 1]")


@dataclass
class NeighborGraph:
    """Exact cosine kNN graph over a pool of samples.

    neighbors[x] lists x's k most similar ids (ties to the lower id);
    reverse[u] is the exact transpose: every x with u in neighbors[x].
    """

    k: int
    neighbors: dict[int, list[int]]
    reverse: dict[int, list[int]]
    zero_norm_count: int = 0

    @property
    def ids(self) -> list[int]:
        return sorted(self.neighbors)


@dataclass
class Selection:
    """Greedy selection order with the score each pick had when chosen."""

    ids: list[int] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)


def build_graph(embeddings: np.ndarray, k: int, ids: Sequence[int] | None = None) -> NeighborGraph:
    """Exact kNN under cosine similarity, O(n^2) similarities.

    Zero-norm vectors get similarity -1 to everything (counted, since they
    indicate degenerate inputs). Neighbor count is min(k, n - 1).
    """
    X = np.asarray(embeddings, dtype=float)
    n = len(X)
    if n < 2:
        raise ValueError("need at least 2 samples to build a graph")
    if ids is None:
        ids = list(range(n))
    ids = [int(i) for i in ids]
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    unit = X / safe[:, None]
    sims = unit @ unit.T
    sims[zero, :] = -1.0
    sims[:, zero] = -1.0
    k_eff = min(k, n - 1)
    neighbors: dict[int, list[int]] = {}
    positions = np.arange(n)
    for i in range(n):
        row = sims[i].copy()
        row[i] = -np.inf  # no self edges
        # lexsort: most similar first, lower position (== lower id) on ties
        order = np.lexsort((positions, -row))
        neighbors[ids[i]] = [ids[j] for j in order[:k_eff]]
    reverse: dict[int, list[int]] = {u: [] for u in ids}
    for x in ids:
        for u in neighbors[x]:
            reverse[u].append(x)
    for u in reverse:
        reverse[u].sort()
    return NeighborGraph(k=k_eff, neighbors=neighbors, reverse=reverse, zero_norm_count=int(zero.sum()))


def budget_size(pool_size: int, fraction: float) -> int:
    return int(math.ceil(fraction * pool_size))


def select(graph: NeighborGraph, cfg: SelectorConfig, pool: Sequence[int]) -> Selection:
    """Greedy diversity selection of ceil(budget_fraction * |pool|) ids.

    Each step recomputes score(u) for the remaining pool and moves the
    argmax (ties to the lower id) into the selected set. Discount counts
    are kept as integers and contributions recomputed as rho**-count, so
    scores carry no float drift; per-id sums use math.fsum, which is
    order-independent, making the greedy trajectory reproducible against a
    from-scratch recomputation of the score formula.
    """
    pool_ids = sorted(int(p) for p in pool)
    if not pool_ids:
        return Selection()
    missing = [p for p in pool_ids if p not in graph.neighbors]
    if missing:
        raise ValueError(f"pool ids not in graph: {missing[:5]}")
    budget = budget_size(len(pool_ids), cfg.budget_fraction)
    pos = {u: i for i, u in enumerate(pool_ids)}
    contrib = np.ones(len(pool_ids))  # rho**-(neighbors-of-x already selected)
    counts = np.zeros(len(pool_ids), dtype=int)
    rev = {u: np.array([pos[x] for x in graph.reverse[u] if x in pos], dtype=int) for u in pool_ids}
    remaining = list(pool_ids)
    out = Selection()
    for _ in range(budget):
        best_id, best_score = None, -math.inf
        for u in remaining:  # ascending id order, strict > implements the tie-break
            s = math.fsum(contrib[rev[u]])
            if s > best_score:
                best_id, best_score = u, s
        remaining.remove(best_id)
        out.ids.append(best_id)
        out.scores.append(best_score)
        # every x that counts best_id as a neighbor loses one power of rho
        for x_pos in rev[best_id]:
            counts[x_pos] += 1
            contrib[x_pos] = cfg.rho ** (-int(counts[x_pos]))
    return out


def random_select(pool: Sequence[int], fraction: float, rng: Rng) -> list[int]:
    """Uniform sample without replacement of ceil(fraction * |pool|) ids."""
    pool_ids = sorted(int(p) for p in pool)
    if not pool_ids:
        return []
    size = budget_size(len(pool_ids), fraction)
    picked = rng.gen.choice(np.array(pool_ids), size=size, replace=False)
    return [int(p) for p in picked]
