"""Exact and approximate search over fusion vector collections."""

from fusionvec.index.hnsw import (
    DEFAULT_EF_CONSTRUCTION,
    DEFAULT_EF_SEARCH,
    DEFAULT_M,
    AnnIndex,
    ann_search,
    build_index,
    load_index,
    persist_index,
)
from fusionvec.index.sparse import VectorCollection, brute_force_search, cosine_dissimilarity

__all__ = [
    "AnnIndex",
    "DEFAULT_EF_CONSTRUCTION",
    "DEFAULT_EF_SEARCH",
    "DEFAULT_M",
    "VectorCollection",
    "ann_search",
    "brute_force_search",
    "build_index",
    "cosine_dissimilarity",
    "load_index",
    "persist_index",
]
