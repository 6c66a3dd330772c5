"""Sparse cosine dissimilarity, vector collections and exhaustive search."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from fusionvec.embedding import FusionVector
from fusionvec.errors import InvalidInputError
from fusionvec.index import container
from fusionvec.ranks import ItemId, Rank, RankEntry

COLLECTION_MAGIC = b"FVCOLL\x00\x01"
COLLECTION_VERSION = 1


def cosine_dissimilarity(a: FusionVector, b: FusionVector) -> float:
    """``1 - cos(a, b)`` by sorted-index intersection; 1.0 if either vector is zero."""
    if a.dimension != b.dimension:
        raise InvalidInputError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    na, nb = a.norm, b.norm
    if na == 0.0 or nb == 0.0:
        return 1.0
    _, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    dot = float(np.dot(a.values[ia], b.values[ib]))
    return min(1.0, max(0.0, 1.0 - dot / (na * nb)))


@dataclass(frozen=True, eq=False)
class VectorCollection:
    """Fusion vectors of a response set, plus a compacted unit-row CSR matrix for search.

    Columns that no stored vector uses are dropped from the matrix; they add
    nothing to any dot product, so queries simply ignore them after
    normalization.
    """

    dimension: int
    items: tuple[ItemId, ...]
    vectors: tuple[FusionVector, ...]
    norms: np.ndarray = field(init=False, repr=False)
    columns: np.ndarray = field(init=False, repr=False)
    matrix: sp.csr_matrix = field(init=False, repr=False)
    _row_of: Mapping[ItemId, int] = field(init=False, repr=False)
    _id_rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        items = tuple(self.items)
        vectors = tuple(self.vectors)
        if len(items) != len(vectors):
            raise InvalidInputError("items and vectors differ in length")
        if len(set(items)) != len(items):
            raise InvalidInputError("duplicate item ids in collection")
        for it, v in zip(items, vectors):
            if v.dimension != self.dimension:
                raise InvalidInputError(f"vector of {it!r} has dimension {v.dimension}, expected {self.dimension}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "vectors", vectors)
        norms = np.array([v.norm for v in vectors], dtype=np.float64)
        if vectors:
            all_idx = np.concatenate([v.indices for v in vectors])
            columns = np.unique(all_idx)
            indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([v.nnz for v in vectors])
            cols = np.searchsorted(columns, all_idx)
            safe = np.where(norms > 0.0, norms, 1.0)
            vals = np.concatenate([v.values for v in vectors]) / np.repeat(safe, np.diff(indptr))
        else:
            columns = np.empty(0, dtype=np.int64)
            indptr = np.zeros(1, dtype=np.int64)
            cols = np.empty(0, dtype=np.int64)
            vals = np.empty(0)
        matrix = sp.csr_matrix((vals, cols, indptr), shape=(len(vectors), max(len(columns), 1)))
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "_row_of", {it: i for i, it in enumerate(items)})
        id_rank = np.empty(len(items), dtype=np.int64)
        id_rank[np.argsort(np.array(items, dtype=object), kind="stable")] = np.arange(len(items))
        object.__setattr__(self, "_id_rank", id_rank)

    @classmethod
    def from_mapping(cls, dimension: int, vectors: Mapping[ItemId, FusionVector]) -> "VectorCollection":
        return cls(dimension, tuple(vectors), tuple(vectors.values()))

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, item: ItemId) -> FusionVector:
        return self.vectors[self._row_of[item]]

    def __contains__(self, item: object) -> bool:
        return item in self._row_of

    @property
    def ncols(self) -> int:
        return self.matrix.shape[1]

    def compact_query(self, query: FusionVector) -> tuple[np.ndarray, np.ndarray]:
        """Map a query onto the compacted columns as unit-norm (cols, values)."""
        if query.dimension != self.dimension:
            raise InvalidInputError(f"dimension mismatch: {query.dimension} vs {self.dimension}")
        norm = query.norm
        if norm == 0.0 or not len(self.columns):
            return np.empty(0, dtype=np.int64), np.empty(0)
        pos = np.searchsorted(self.columns, query.indices)
        pos_c = np.minimum(pos, len(self.columns) - 1)
        hit = self.columns[pos_c] == query.indices
        return pos_c[hit], query.values[hit] / norm

    def dense_query(self, query: FusionVector) -> np.ndarray:
        cols, vals = self.compact_query(query)
        dense = np.zeros(self.ncols)
        dense[cols] = vals
        return dense

    def dissimilarities(self, query: FusionVector) -> np.ndarray:
        sims = self.matrix @ self.dense_query(query)
        return np.clip(1.0 - sims, 0.0, 1.0)

    def to_rank(self, rows: np.ndarray, dists: np.ndarray, query: ItemId, ranker: str) -> Rank:
        """Canonical rank of the given rows: ascending distance, ties by item id."""
        rows = np.asarray(rows, dtype=np.int64)
        dists = np.asarray(dists, dtype=np.float64)
        order = np.lexsort((self._id_rank[rows], dists))
        entries = tuple(
            RankEntry(self.items[r], 1.0 - float(d), pos)
            for pos, (r, d) in enumerate(zip(rows[order], dists[order]), start=1)
        )
        return Rank(ranker, query, entries)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.dimension).encode())
        for it, v in zip(self.items, self.vectors):
            h.update(b"\x00" + it.encode("utf-8") + b"\x00")
            h.update(v.indices.tobytes())
            h.update(v.values.tobytes())
        return h.hexdigest()

    def save(self, path: str | os.PathLike) -> None:
        indptr = np.zeros(len(self.vectors) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([v.nnz for v in self.vectors])
        idx = np.concatenate([v.indices for v in self.vectors]) if self.vectors else np.empty(0, dtype=np.int64)
        val = np.concatenate([v.values for v in self.vectors]) if self.vectors else np.empty(0)
        header = {"dimension": self.dimension, "items": list(self.items), "fingerprint": self.fingerprint()}
        container.write(path, COLLECTION_MAGIC, COLLECTION_VERSION, header, {"indptr": indptr, "indices": idx, "values": val})

    @classmethod
    def load(cls, path: str | os.PathLike) -> "VectorCollection":
        header, arrays = container.read(path, COLLECTION_MAGIC, COLLECTION_VERSION)
        indptr, idx, val = arrays["indptr"], arrays["indices"], arrays["values"]
        dim = int(header["dimension"])
        vectors = tuple(FusionVector(dim, idx[a:b], val[a:b]) for a, b in zip(indptr[:-1], indptr[1:]))
        coll = cls(dim, tuple(header["items"]), vectors)
        if coll.fingerprint() != header["fingerprint"]:
            raise container.IndexLoadError(f"{path}: collection fingerprint mismatch")
        return coll


def brute_force_search(
    query: FusionVector,
    coll: VectorCollection,
    k: int,
    query_id: ItemId = "query",
    ranker: str = "fv-exact",
) -> Rank:
    """Exhaustive top-k by cosine dissimilarity; scores reported as similarities."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    n = len(coll)
    if n == 0:
        return Rank(ranker, query_id, ())
    d = coll.dissimilarities(query)
    if k >= n:
        rows = np.arange(n)
    else:
        kth = np.partition(d, k - 1)[k - 1]
        rows = np.flatnonzero(d <= kth)
    rank = coll.to_rank(rows, d[rows], query_id, ranker)
    return rank.truncated(k)


def collection_from(items: Sequence[ItemId], vectors: Iterable[FusionVector], dimension: int) -> VectorCollection:
    return VectorCollection(dimension, tuple(items), tuple(vectors))
