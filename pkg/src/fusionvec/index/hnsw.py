"""Hierarchical navigable small-world index over sparse fusion vectors."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from fusionvec.embedding import FusionVector
from fusionvec.errors import IndexLoadError, InvalidInputError
from fusionvec.index import _kernels, container
from fusionvec.index.sparse import VectorCollection
from fusionvec.ranks import ItemId, Rank

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 100

INDEX_MAGIC = b"FVHNSW\x00\x01"
INDEX_VERSION = 1


@dataclass(frozen=True, eq=False)
class AnnIndex:
    collection: VectorCollection
    M: int
    ef_construction: int
    seed: int
    levels: np.ndarray
    entry: int
    top: int
    links0: np.ndarray = field(repr=False)
    dist0: np.ndarray = field(repr=False)
    count0: np.ndarray = field(repr=False)
    uoff: np.ndarray = field(repr=False)
    ulinks: np.ndarray = field(repr=False)
    udist: np.ndarray = field(repr=False)
    ucount: np.ndarray = field(repr=False)
    repaired: int = 0
    _csr: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_csr", _csr(self.collection))

    def __len__(self) -> int:
        return len(self.collection)

    def neighbors(self, node: int, level: int = 0) -> np.ndarray:
        if level == 0:
            return self.links0[node, : self.count0[node]]
        if level > self.levels[node]:
            return np.empty(0, dtype=self.ulinks.dtype)
        row = self.uoff[node] + level - 1
        return self.ulinks[row, : self.ucount[row]]

    def adjacency(self) -> list[list[tuple[int, ...]]]:
        """Per-level adjacency lists, ``out[level][node]`` (empty tuples above a node's level)."""
        n = len(self)
        return [
            [tuple(int(x) for x in self.neighbors(v, lv)) if self.levels[v] >= lv else () for v in range(n)]
            for lv in range(self.top + 1)
        ]

    def reachable_from_entry(self) -> int:
        if len(self) == 0:
            return 0
        seen = np.zeros(len(self), dtype=np.int8)
        _kernels._reach(self.entry, self.links0, self.count0, seen)
        return int(seen.sum())


def _levels(n: int, M: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ml = 1.0 / math.log(M)
    u = 1.0 - rng.random(n)  # (0, 1]
    return np.floor(-np.log(u) * ml).astype(np.int64)


def _csr(coll: VectorCollection) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = coll.matrix
    return m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.float64)


def build_index(
    coll: VectorCollection,
    M: int = DEFAULT_M,
    ef_construction: int = DEFAULT_EF_CONSTRUCTION,
    seed: int = 0,
) -> AnnIndex:
    """Insert the collection in order into a layered graph; deterministic for a fixed seed."""
    if M < 2:
        raise InvalidInputError(f"M must be >= 2, got {M}")
    if ef_construction < M:
        raise InvalidInputError(f"efConstruction ({ef_construction}) must be >= M ({M})")
    n = len(coll)
    levels = _levels(n, M, seed)
    M0 = 2 * M
    links0 = np.full((n, M0), -1, dtype=np.int64)
    dist0 = np.zeros((n, M0))
    count0 = np.zeros(n, dtype=np.int64)
    uoff = np.zeros(n, dtype=np.int64)
    if n:
        uoff[1:] = np.cumsum(levels)[:-1]
    rows = int(levels.sum())
    ulinks = np.full((rows, M), -1, dtype=np.int64)
    udist = np.zeros((rows, M))
    ucount = np.zeros(rows, dtype=np.int64)
    indptr, indices, data = _csr(coll)
    entry, top = _kernels.build_graph(
        indptr, indices, data, coll.ncols, levels, M, ef_construction,
        links0, dist0, count0, uoff, ulinks, udist, ucount,
    )
    repaired = 0
    if n:
        repaired = _kernels.repair_reachability(
            indptr, indices, data, coll.ncols, entry, ef_construction,
            links0, dist0, count0, uoff, ulinks, ucount,
        )
    return AnnIndex(
        coll, M, ef_construction, seed, levels, int(entry), int(top),
        links0, dist0, count0, uoff, ulinks, udist, ucount, int(repaired),
    )


def ann_search(
    index: AnnIndex,
    query: FusionVector,
    k: int,
    ef_search: int = DEFAULT_EF_SEARCH,
    query_id: ItemId = "query",
    ranker: str = "fv-ann",
) -> Rank:
    """Approximate top-k by cosine dissimilarity, as a canonical similarity rank."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if ef_search < k:
        raise InvalidInputError(f"efSearch ({ef_search}) must be >= k ({k})")
    coll = index.collection
    if len(coll) == 0:
        return Rank(ranker, query_id, ())
    qdense = coll.dense_query(query)
    indptr, indices, data = index._csr
    rows, dists = _kernels.search_graph(
        qdense, indptr, indices, data, index.entry, index.top, k, ef_search,
        index.links0, index.count0, index.uoff, index.ulinks, index.ucount,
    )
    return coll.to_rank(rows, dists, query_id, ranker)


def persist_index(index: AnnIndex, path: str | os.PathLike) -> None:
    header = {
        "M": index.M,
        "ef_construction": index.ef_construction,
        "seed": index.seed,
        "entry": index.entry,
        "top": index.top,
        "n": len(index),
        "repaired": index.repaired,
        "collection": index.collection.fingerprint(),
    }
    arrays = {
        "levels": index.levels,
        "links0": index.links0,
        "dist0": index.dist0,
        "count0": index.count0,
        "uoff": index.uoff,
        "ulinks": index.ulinks,
        "udist": index.udist,
        "ucount": index.ucount,
    }
    container.write(path, INDEX_MAGIC, INDEX_VERSION, header, arrays)


def load_index(path: str | os.PathLike, collection: VectorCollection) -> AnnIndex:
    """Load an index file and bind it to ``collection``, which must match the one it was built on."""
    header, a = container.read(path, INDEX_MAGIC, INDEX_VERSION)
    if header["collection"] != collection.fingerprint() or header["n"] != len(collection):
        raise IndexLoadError(f"{path}: index was built over a different vector collection")
    n = header["n"]
    if a["links0"].shape[0] != n or a["levels"].shape[0] != n:
        raise IndexLoadError(f"{path}: inconsistent array shapes")
    return AnnIndex(
        collection, int(header["M"]), int(header["ef_construction"]), int(header["seed"]), a["levels"],
        int(header["entry"]), int(header["top"]), a["links0"], a["dist0"], a["count0"], a["uoff"],
        a["ulinks"], a["udist"], a["ucount"], int(header["repaired"]),
    )
