"""Fusion graph extraction.

A query's fusion graph has one vertex per item retrieved by any of its ranks.
Vertex ``A`` weighs the summed similarity of ``A`` to the query across those
ranks; the directed edge ``(A, B)`` accumulates, for every rank of the query
that holds ``A`` and every rank of ``A`` that holds ``B``, the similarity of
``B`` to ``A`` divided by the position of ``A`` in the query's rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple, TextIO

from fusionvec.errors import IncompleteStoreError, InvalidInputError
from fusionvec.ranks import ItemId, RankSet
from fusionvec.store import RankStore


@dataclass(frozen=True)
class FusionGraph:
    query: ItemId
    vertices: Mapping[ItemId, float]
    edges: Mapping[tuple[ItemId, ItemId], float]
    _out: Mapping[ItemId, tuple[ItemId, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vertices = dict(self.vertices)
        edges = {k: v for k, v in self.edges.items()}
        out: dict[ItemId, list[ItemId]] = {}
        for v, w in vertices.items():
            if not w >= 0.0:
                raise InvalidInputError(f"vertex {v!r} has invalid weight {w!r}")
        for (a, b), w in edges.items():
            if a not in vertices or b not in vertices:
                raise InvalidInputError(f"edge ({a!r}, {b!r}) has an endpoint outside the graph")
            if not w > 0.0:
                raise InvalidInputError(f"edge ({a!r}, {b!r}) has non-positive weight {w!r}")
            if a == b:
                raise InvalidInputError(f"self-loop on {a!r}")
            out.setdefault(a, []).append(b)
        object.__setattr__(self, "vertices", MappingProxyType(vertices))
        object.__setattr__(self, "edges", MappingProxyType(edges))
        object.__setattr__(self, "_out", MappingProxyType({a: tuple(sorted(bs)) for a, bs in out.items()}))

    def successors(self, vertex: ItemId) -> tuple[ItemId, ...]:
        return self._out.get(vertex, ())

    def __len__(self) -> int:
        return len(self.vertices)


def extract_fusion_graph(rank_set: RankSet, store: RankStore) -> FusionGraph:
    """Build the fusion graph of ``rank_set.query`` in O(m^2 L^2).

    Self-loops are dropped and edges only join vertices of the graph.
    """
    rankers = rank_set.rankers
    unknown = [r for r in rankers if r not in store.rankers]
    if unknown:
        raise InvalidInputError(f"rank set uses rankers {unknown} absent from the store")

    vertices: dict[ItemId, float] = {}
    # sum over the query's ranks of 1/position(A): the only factor of the edge weight that depends on the query
    inv_pos: dict[ItemId, float] = {}
    for rank in rank_set.ranks:
        for entry in rank.entries:
            vertices[entry.item] = vertices.get(entry.item, 0.0) + entry.score
            inv_pos[entry.item] = inv_pos.get(entry.item, 0.0) + 1.0 / entry.position

    missing = [(r, a) for a in vertices for r in rankers if (r, a) not in store.table]
    if missing:
        raise IncompleteStoreError(missing)

    edges: dict[tuple[ItemId, ItemId], float] = {}
    for a, factor in inv_pos.items():
        for ranker in rankers:
            for entry in store.table[(ranker, a)].entries:
                b = entry.item
                if b == a or b not in vertices or entry.score == 0.0:
                    continue
                key = (a, b)
                edges[key] = edges.get(key, 0.0) + entry.score * factor
    return FusionGraph(rank_set.query, vertices, edges)


class GraphStats(NamedTuple):
    vertex_count: int
    edge_count: int
    total_vertex_weight: float
    total_edge_weight: float


def graph_stats(fg: FusionGraph) -> GraphStats:
    return GraphStats(len(fg.vertices), len(fg.edges), sum(fg.vertices.values()), sum(fg.edges.values()))


def dump_graph(fg: FusionGraph, fh: TextIO) -> None:
    """Write ``v <id> <w>`` then ``e <src> <dst> <w>`` lines in sorted order."""
    for v in sorted(fg.vertices):
        fh.write(f"v {v} {fg.vertices[v]:.12g}\n")
    for a, b in sorted(fg.edges):
        fh.write(f"e {a} {b} {fg.edges[(a, b)]:.12g}\n")
