"""Offline modelling of a response set as fusion vectors, and the online query stages."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from fusionvec.baselines import BASELINES
from fusionvec.embedding import (
    DEFAULT_SIGMA,
    EmbeddingKind,
    EmbeddingSpace,
    FusionVector,
    build_codebook,
    dumps_json,
    extract_subgraphs,
)
from fusionvec.errors import InvalidInputError, UnknownItemError
from fusionvec.graph import FusionGraph, extract_fusion_graph
from fusionvec.index import (
    DEFAULT_EF_CONSTRUCTION,
    DEFAULT_EF_SEARCH,
    DEFAULT_M,
    AnnIndex,
    VectorCollection,
    ann_search,
    brute_force_search,
    build_index,
    load_index,
    persist_index,
)
from fusionvec.index.container import atomic_write_bytes
from fusionvec.ranks import ItemId, Rank, RankSet
from fusionvec.store import RankStore

Stage = tuple[str, Callable[[Any], Any]]

FV_METHODS: dict[str, tuple[EmbeddingKind, bool]] = {
    "fv-v": (EmbeddingKind.VERTEX, False),
    "fv-h": (EmbeddingKind.HYBRID, False),
    "fv-k": (EmbeddingKind.KERNEL, False),
    "fv-v-fast": (EmbeddingKind.VERTEX, True),
    "fv-h-fast": (EmbeddingKind.HYBRID, True),
    "fv-k-fast": (EmbeddingKind.KERNEL, True),
}
KIND_TAGS = {EmbeddingKind.VERTEX: "v", EmbeddingKind.HYBRID: "h", EmbeddingKind.KERNEL: "k"}


def method_names(rankers: Iterable[str] = ()) -> list[str]:
    return [*FV_METHODS, *BASELINES, "best-single", *(f"single:{r}" for r in rankers)]


def check_method(method: str, rankers: Sequence[str]) -> None:
    if method in FV_METHODS or method in BASELINES or method == "best-single":
        return
    if method.startswith("single:") and method[7:] in rankers:
        return
    raise InvalidInputError(f"unknown method {method!r}; choose from {', '.join(method_names(rankers))}")


@dataclass(frozen=True)
class EmbeddingParams:
    codebook_size: int | None = None
    sigma: float = DEFAULT_SIGMA
    strategy: str = "random"
    seed: int = 0


@dataclass(frozen=True)
class IndexParams:
    M: int = DEFAULT_M
    ef_construction: int = DEFAULT_EF_CONSTRUCTION
    ef_search: int = DEFAULT_EF_SEARCH
    seed: int = 0


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))  # map keeps input order


class FusionRetriever:
    """Fusion-vector ranker over one ranker configuration and one embedding."""

    def __init__(
        self,
        store: RankStore,
        space: EmbeddingSpace,
        collection: VectorCollection,
        index: AnnIndex,
        ef_search: int = DEFAULT_EF_SEARCH,
    ):
        self.store = store
        self.space = space
        self.collection = collection
        self.index = index
        self.ef_search = ef_search

    @property
    def rankers(self) -> tuple[str, ...]:
        return self.store.rankers

    @classmethod
    def build(
        cls,
        store: RankStore,
        kind: EmbeddingKind | str,
        embedding: EmbeddingParams = EmbeddingParams(),
        index: IndexParams = IndexParams(),
        threads: int = 1,
    ) -> "FusionRetriever":
        kind = EmbeddingKind(kind)
        items = store.items
        graphs = _map(lambda q: extract_fusion_graph(store.rank_set(q), store), items, threads)
        if kind is EmbeddingKind.KERNEL:
            population = [g for fg in graphs for g in extract_subgraphs(fg)]
            if not population:
                raise InvalidInputError("no subgraphs to build a codebook from")
            codebook = build_codebook(
                population, embedding.codebook_size, embedding.strategy, embedding.sigma, embedding.seed
            )
            space = EmbeddingSpace.kernel(codebook, items)
        elif kind is EmbeddingKind.HYBRID:
            space = EmbeddingSpace.hybrid(items)
        else:
            space = EmbeddingSpace.vertex(items)
        vectors = _map(space.embed, graphs, threads)
        collection = VectorCollection(space.dimension, tuple(items), tuple(vectors))
        ann = build_index(collection, index.M, index.ef_construction, index.seed)
        return cls(store, space, collection, ann, index.ef_search)

    # -- online stages

    def rank_set(self, query: ItemId | RankSet) -> RankSet:
        if isinstance(query, RankSet):
            if query.rankers != self.rankers:
                raise InvalidInputError(f"query rank set uses rankers {query.rankers}, expected {self.rankers}")
            return query
        if query not in self.store:
            raise UnknownItemError(f"unknown query id {query!r}")
        return self.store.rank_set(query)

    def graph(self, query: ItemId | RankSet) -> FusionGraph:
        return extract_fusion_graph(self.rank_set(query), self.store)

    def embed(self, fg: FusionGraph) -> FusionVector:
        return self.space.embed(fg)

    def retrieve(self, vector: FusionVector, k: int, fast: bool, query_id: ItemId = "query", ranker: str | None = None) -> Rank:
        tag = ranker or f"fv-{KIND_TAGS[self.space.kind]}{'-fast' if fast else ''}"
        if fast:
            k_eff = min(k, max(len(self.collection), 1))
            return ann_search(self.index, vector, k_eff, max(self.ef_search, k_eff), query_id, tag)
        return brute_force_search(vector, self.collection, k, query_id, tag)

    def stages(self, k: int, fast: bool, query_id: ItemId) -> list[Stage]:
        return [
            ("extraction", self.graph),
            ("embedding", self.embed),
            ("retrieval", lambda v: self.retrieve(v, k, fast, query_id)),
        ]

    def search(self, query: ItemId | RankSet, k: int, fast: bool = True) -> Rank:
        qid = query.query if isinstance(query, RankSet) else query
        return self.retrieve(self.embed(self.graph(query)), k, fast, qid)

    # -- persistence

    def save(self, directory: str | os.PathLike) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(d / "space.json", dumps_json(self.space.to_json()).encode("utf-8"))
        if self.space.codebook is not None:
            atomic_write_bytes(d / "codebook.json", dumps_json(self.space.codebook.to_json()).encode("utf-8"))
        self.collection.save(d / "collection.fvc")
        persist_index(self.index, d / "index.fvi")
        meta = {"rankers": list(self.rankers), "ef_search": self.ef_search}
        atomic_write_bytes(d / "retriever.json", dumps_json(meta).encode("utf-8"))

    @classmethod
    def load(cls, directory: str | os.PathLike, store: RankStore, ef_search: int | None = None) -> "FusionRetriever":
        d = Path(directory)
        meta = json.loads((d / "retriever.json").read_text(encoding="utf-8"))
        space = EmbeddingSpace.from_json(json.loads((d / "space.json").read_text(encoding="utf-8")))
        collection = VectorCollection.load(d / "collection.fvc")
        index = load_index(d / "index.fvi", collection)
        sub = store.subset(meta["rankers"])
        return cls(sub, space, collection, index, ef_search if ef_search is not None else meta["ef_search"])


def baseline_stages(store: RankStore, method: str, k: int, rankers: Sequence[str]) -> list[Stage]:
    fn = BASELINES[method]
    return [
        ("extraction", lambda q: store.rank_set(q, rankers)),
        ("retrieval", lambda rs: fn(rs).as_rank().truncated(k)),
    ]


def single_stages(store: RankStore, ranker: str, k: int) -> list[Stage]:
    return [("retrieval", lambda q: store.rank(ranker, q).truncated(k))]


def params_dict(embedding: EmbeddingParams, index: IndexParams) -> dict:
    return {"embedding": asdict(embedding), "index": asdict(index)}
