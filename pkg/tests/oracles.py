"""Slow, literal reference implementations used as test oracles.

Nothing here shares code with the package beyond the plain data types, so a
bug in a vectorized path cannot hide behind the same bug in its oracle.
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np

from fusionvec.graph import FusionGraph
from fusionvec.ranks import Rank
from fusionvec.store import RankStore


def random_store(rng: random.Random, n_items: int, m: int, length: int, self_first: bool = True) -> RankStore:
    """Closed-world store of similarity ranks over ``n_items`` ids."""
    items = [f"i{k:02d}" for k in range(n_items)]
    ranks = []
    for r in range(m):
        for q in items:
            others = [x for x in items if x != q]
            rng.shuffle(others)
            chosen = ([q] + others)[:length] if self_first else (others + [q])[:length]
            scores = sorted((rng.choice([0.0, 0.25, 0.5, 1.0, rng.random()]) for _ in chosen), reverse=True)
            ranks.append(Rank.from_scored(f"r{r}", q, list(zip(chosen, scores))))
    return RankStore.from_ranks(ranks, length, [f"r{r}" for r in range(m)])


def fusion_graph_oracle(query, store: RankStore):
    """Vertex and edge weights by direct summation over ranks, items and positions."""
    tq = [store.table[(r, query)] for r in store.rankers]
    vertices: dict = {}
    for tau in tq:
        for e in tau.entries:
            vertices[e.item] = vertices.get(e.item, 0.0) + e.score
    edges: dict = {}
    for tau_i in tq:
        for a_entry in tau_i.entries:
            a = a_entry.item
            for r in store.rankers:
                tau_j = store.table[(r, a)]
                for b_entry in tau_j.entries:
                    b = b_entry.item
                    if b == a or b not in vertices:
                        continue
                    edges[(a, b)] = edges.get((a, b), 0.0) + b_entry.score / a_entry.position
    edges = {k: v for k, v in edges.items() if v != 0.0}
    return vertices, edges


def hybrid_oracle(vertices: dict, edges: dict, order: list) -> dict[int, float]:
    """Enumerate pairs i<j lexicographically and lay them out after the n vertex slots."""
    n = len(order)
    out: dict[int, float] = {}
    for i, item in enumerate(order):
        if vertices.get(item, 0.0) > 0:
            out[i] = vertices[item]
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            w = edges.get((order[i], order[j]), 0.0) + edges.get((order[j], order[i]), 0.0)
            if w > 0:
                out[k] = w
            k += 1
    return out


def gaussian(x: float, sigma: float) -> float:
    return math.exp(-(x * x) / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))


def mcs_oracle(g1, g2) -> float:
    v1, v2 = set(g1.vertices), set(g2.vertices)
    e1, e2 = set(g1.edges), set(g2.edges)
    shared = len(v1 & v2) + len(e1 & e2)
    return 1.0 - shared / max(len(v1) + len(e1), len(v2) + len(e2))


def soft_assign_oracle(g, codewords, sigma: float) -> list[float]:
    ks = [gaussian(mcs_oracle(g, w), sigma) for w in codewords]
    total = sum(ks)
    return [k / total for k in ks]


def subgraphs_oracle(vertices: dict, edges: dict) -> dict:
    """center -> (vertex set, edge set) by scanning the full edge list for each vertex."""
    out = {}
    for v in vertices:
        nbrs = {b for (a, b) in edges if a == v}
        members = {v} | nbrs
        sub_edges = {(a, b) for (a, b) in edges if a in members and b in members}
        out[v] = (members, sub_edges)
    return out


def dense_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return float(min(1.0, max(0.0, 1.0 - a @ b / (na * nb))))


def exhaustive_medoids(dist: np.ndarray, k: int) -> tuple[float, tuple[int, ...]]:
    best = (math.inf, ())
    for combo in itertools.combinations(range(dist.shape[0]), k):
        cost = float(dist[:, combo].min(axis=1).sum())
        if cost < best[0] - 1e-12:
            best = (cost, combo)
    return best


def winning_oracle(table: dict) -> dict[str, int]:
    methods = sorted({m for m, _, _ in table})
    datasets = sorted({d for _, d, _ in table})
    configs = sorted({c for _, _, c in table})
    wins = {m: 0 for m in methods}
    for m in methods:
        for d in datasets:
            for c in configs:
                for rival in methods:
                    if table[(m, d, c)] > table[(rival, d, c)]:
                        wins[m] += 1
    return wins


def random_graph(rng: random.Random, n_items: int = 8, p_vertex: float = 0.6, p_edge: float = 0.3) -> FusionGraph:
    items = [f"i{k}" for k in range(n_items)]
    vertices = {it: round(rng.uniform(0.05, 3.0), 3) for it in items if rng.random() < p_vertex}
    edges = {
        (a, b): round(rng.uniform(0.01, 2.0), 3)
        for a in vertices
        for b in vertices
        if a != b and rng.random() < p_edge
    }
    return FusionGraph("q", vertices, edges)
