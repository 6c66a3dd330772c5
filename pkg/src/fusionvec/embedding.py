"""Fusion graph embeddings: vertex, hybrid and kernel (bag-of-graphs).

All three produce a :class:`FusionVector`, a sparse non-negative vector whose
attribute set is fixed by an :class:`EmbeddingSpace`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from fusionvec.errors import InvalidInputError, UnknownItemError
from fusionvec.graph import FusionGraph
from fusionvec.ranks import ItemId

CODEBOOK_FORMAT = "fusionvec-codebook"
SPACE_FORMAT = "fusionvec-space"
FORMAT_VERSION = 1

DEFAULT_CODEBOOK_SIZE = 500
DEFAULT_SIGMA = 0.25
MEDOID_MAX_ITER = 20
MEDOID_RESTARTS = 5


@dataclass(frozen=True, eq=False)
class FusionVector:
    """Sparse vector stored as sorted (index, value) arrays; every value is > 0."""

    dimension: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        idx = np.array(self.indices, dtype=np.int64)
        val = np.array(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise InvalidInputError("indices and values must be 1-D arrays of equal length")
        if self.dimension < 1:
            raise InvalidInputError("dimension must be positive")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dimension or np.any(np.diff(idx) <= 0):
                raise InvalidInputError("indices must be strictly increasing and inside [0, dimension)")
            if not np.all(val > 0.0) or not np.all(np.isfinite(val)):
                raise InvalidInputError("stored values must be finite and > 0")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_mapping(cls, dimension: int, entries: Mapping[int, float]) -> "FusionVector":
        keys = sorted(k for k, v in entries.items() if v > 0.0)
        return cls(dimension, np.array(keys, dtype=np.int64), np.array([entries[k] for k in keys], dtype=np.float64))

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "FusionVector":
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.flatnonzero(dense > 0.0)
        return cls(dense.size, nz, dense[nz])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        out[self.indices] = self.values
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FusionVector):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def dump(self, fh: TextIO) -> None:
        for i, v in zip(self.indices, self.values):
            fh.write(f"{int(i)}:{v:.12g}\n")


# -- vertex and hybrid -----------------------------------------------------


def hybrid_dimension(n: int) -> int:
    """Vertex attributes plus one attribute per unordered pair of distinct items."""
    return n + n * (n - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Attribute of the unordered pair ``{i, j}``, lexicographic over ``i < j``."""
    if i > j:
        i, j = j, i
    if not 0 <= i < j < n:
        raise InvalidInputError(f"invalid pair ({i}, {j}) for n={n}")
    return n + i * (2 * n - i - 1) // 2 + (j - i - 1)


class EmbeddingKind(str, Enum):
    VERTEX = "vertex"
    HYBRID = "hybrid"
    KERNEL = "kernel"


# -- kernel / bag of graphs ------------------------------------------------


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Neighbourhood pattern of one vertex: the vertex, its out-neighbours, and all edges among them."""

    center: ItemId
    vertices: Mapping[ItemId, float]
    edges: Mapping[tuple[ItemId, ItemId], float]
    labels: frozenset = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.center not in self.vertices:
            raise InvalidInputError(f"subgraph center {self.center!r} missing from its vertices")
        for a, b in self.edges:
            if a not in self.vertices or b not in self.vertices:
                raise InvalidInputError(f"subgraph edge ({a!r}, {b!r}) leaves the vertex set")
        object.__setattr__(self, "vertices", MappingProxyType(dict(self.vertices)))
        object.__setattr__(self, "edges", MappingProxyType(dict(self.edges)))
        object.__setattr__(self, "labels", frozenset(self.vertices) | frozenset(self.edges))

    @property
    def size(self) -> int:
        return len(self.vertices) + len(self.edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Subgraph):
            return NotImplemented
        return (
            self.center == other.center
            and dict(self.vertices) == dict(other.vertices)
            and dict(self.edges) == dict(other.edges)
        )

    def __hash__(self) -> int:
        return hash((self.center, self.labels))

    def to_json(self) -> dict:
        return {
            "center": self.center,
            "vertices": [[v, self.vertices[v]] for v in sorted(self.vertices)],
            "edges": [[a, b, self.edges[(a, b)]] for a, b in sorted(self.edges)],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Subgraph":
        return cls(
            obj["center"],
            {v: float(w) for v, w in obj["vertices"]},
            {(a, b): float(w) for a, b, w in obj["edges"]},
        )


def extract_subgraphs(fg: FusionGraph) -> list[Subgraph]:
    """One subgraph per vertex (sorted by id), induced on the vertex and its direct successors."""
    out = []
    for v in sorted(fg.vertices):
        members = (v, *fg.successors(v))
        member_set = set(members)
        vertices = {u: fg.vertices[u] for u in members}
        edges = {}
        for a in members:
            for b in fg.successors(a):
                if b in member_set:
                    edges[(a, b)] = fg.edges[(a, b)]
        out.append(Subgraph(v, vertices, edges))
    return out


def mcs_dissimilarity(g1: Subgraph, g2: Subgraph) -> float:
    """1 - |mcs| / max(|g1|, |g2|) with uniquely labelled vertices, sizes counting vertices and edges."""
    if not g1.vertices or not g2.vertices:
        raise InvalidInputError("mcs_dissimilarity needs non-empty subgraphs")
    common = len(g1.labels & g2.labels)
    return 1.0 - common / max(g1.size, g2.size)


def gaussian_kernel(x: float | np.ndarray, sigma: float) -> float | np.ndarray:
    return np.exp(-(np.asarray(x) ** 2) / (2.0 * sigma * sigma)) / (sigma * math.sqrt(2.0 * math.pi))


def _soft_rows(dissim: np.ndarray, sigma: float) -> np.ndarray:
    # the kernel's constant factor cancels; shifting by the per-row minimum keeps tiny sigmas from underflowing
    sq = dissim * dissim
    z = -(sq - sq.min(axis=1, keepdims=True)) / (2.0 * sigma * sigma)
    k = np.exp(z)
    return k / k.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Codebook:
    codewords: tuple[Subgraph, ...]
    sigma: float = DEFAULT_SIGMA
    strategy: str = "random"
    seed: int = 0
    _vocab: Mapping = field(init=False, repr=False)
    _matrix: sp.csr_matrix = field(init=False, repr=False)
    _sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "codewords", tuple(self.codewords))
        if not self.codewords:
            raise InvalidInputError("codebook must not be empty")
        if not self.sigma > 0.0:
            raise InvalidInputError(f"sigma must be > 0, got {self.sigma!r}")
        vocab: dict = {}
        for w in self.codewords:
            for label in sorted(w.labels, key=repr):
                vocab.setdefault(label, len(vocab))
        object.__setattr__(self, "_vocab", vocab)
        object.__setattr__(self, "_matrix", _label_matrix(self.codewords, vocab))
        object.__setattr__(self, "_sizes", np.array([w.size for w in self.codewords], dtype=np.float64))

    def __len__(self) -> int:
        return len(self.codewords)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return (self.codewords, self.sigma, self.strategy, self.seed) == (
            other.codewords,
            other.sigma,
            other.strategy,
            other.seed,
        )

    def dissimilarities(self, subgraphs: Sequence[Subgraph]) -> np.ndarray:
        """MCS dissimilarity of every subgraph against every codeword, as a dense matrix."""
        if any(not g.vertices for g in subgraphs):
            raise InvalidInputError("mcs_dissimilarity needs non-empty subgraphs")
        common = (_label_matrix(subgraphs, self._vocab) @ self._matrix.T).toarray()
        sizes = np.array([g.size for g in subgraphs], dtype=np.float64)
        return 1.0 - common / np.maximum(sizes[:, None], self._sizes[None, :])

    def to_json(self) -> dict:
        return {
            "format": CODEBOOK_FORMAT,
            "version": FORMAT_VERSION,
            "sigma": self.sigma,
            "strategy": self.strategy,
            "seed": self.seed,
            "codewords": [w.to_json() for w in self.codewords],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Codebook":
        if obj.get("format") != CODEBOOK_FORMAT or obj.get("version") != FORMAT_VERSION:
            raise InvalidInputError("not a version-1 fusionvec codebook")
        return cls(
            tuple(Subgraph.from_json(w) for w in obj["codewords"]),
            float(obj["sigma"]),
            obj["strategy"],
            int(obj["seed"]),
        )


def _label_matrix(subgraphs: Sequence[Subgraph], vocab: Mapping) -> sp.csr_matrix:
    indptr = [0]
    cols: list[int] = []
    for g in subgraphs:
        cols.extend(vocab[label] for label in g.labels if label in vocab)
        indptr.append(len(cols))
    data = np.ones(len(cols), dtype=np.float64)
    return sp.csr_matrix((data, np.array(cols, dtype=np.int64), np.array(indptr)), shape=(len(subgraphs), len(vocab)))


def pairwise_mcs(subgraphs: Sequence[Subgraph], other: Sequence[Subgraph] | None = None) -> np.ndarray:
    other = subgraphs if other is None else other
    vocab: dict = {}
    for g in (*subgraphs, *other):
        for label in g.labels:
            vocab.setdefault(label, len(vocab))
    a = _label_matrix(subgraphs, vocab)
    b = a if other is subgraphs else _label_matrix(other, vocab)
    common = (a @ b.T).toarray()
    sa = np.array([g.size for g in subgraphs], dtype=np.float64)
    sb = np.array([g.size for g in other], dtype=np.float64)
    return 1.0 - common / np.maximum(sa[:, None], sb[None, :])


def _kmedoids(subgraphs: Sequence[Subgraph], size: int, rng: np.random.Generator) -> list[int]:
    """k-medoids++ seeding then alternating assignment/update; best of a few seeded restarts."""
    n = len(subgraphs)
    vocab: dict = {}
    for g in subgraphs:
        for label in g.labels:
            vocab.setdefault(label, len(vocab))
    mat = _label_matrix(subgraphs, vocab)
    sizes = np.array([g.size for g in subgraphs], dtype=np.float64)

    def dist_to(cols: Sequence[int]) -> np.ndarray:
        common = (mat @ mat[list(cols)].T).toarray()
        return 1.0 - common / np.maximum(sizes[:, None], sizes[list(cols)][None, :])

    def run() -> tuple[float, list[int]]:
        medoids = [int(rng.integers(n))]
        nearest = dist_to(medoids)[:, 0]
        while len(medoids) < size:
            weights = nearest * nearest
            weights[medoids] = 0.0
            total = weights.sum()
            if total <= 0.0:
                pick = int(rng.choice(np.setdiff1d(np.arange(n), medoids)))
            else:
                pick = int(rng.choice(n, p=weights / total))
            medoids.append(pick)
            nearest = np.minimum(nearest, dist_to([pick])[:, 0])

        for _ in range(MEDOID_MAX_ITER):
            d = dist_to(medoids)
            assign = np.argmin(d, axis=1)
            assign[medoids] = np.arange(size)
            changed = False
            for c in range(size):
                members = np.flatnonzero(assign == c)
                costs = dist_to(members)[members].sum(axis=0)
                current = int(np.flatnonzero(members == medoids[c])[0])
                best = int(np.argmin(costs))
                if costs[best] < costs[current] - 1e-12:
                    medoids[c] = int(members[best])
                    changed = True
            if not changed:
                break
        return float(dist_to(medoids).min(axis=1).sum()), medoids

    # a single seeding can put two medoids in one cluster, which the updates never undo
    best_cost, best = run()
    for _ in range(MEDOID_RESTARTS - 1):
        cost, medoids = run()
        if cost < best_cost - 1e-12:
            best_cost, best = cost, medoids
    return best


def build_codebook(
    subgraphs: Sequence[Subgraph],
    size: int | None = None,
    strategy: str = "random",
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
) -> Codebook:
    """Select ``size`` codewords from ``subgraphs`` at random or as k-medoids under MCS."""
    population = len(subgraphs)
    if size is None:
        size = min(DEFAULT_CODEBOOK_SIZE, population)
    if size < 1:
        raise InvalidInputError("codebook size must be positive")
    if size > population:
        raise InvalidInputError(f"codebook size {size} exceeds population of {population} subgraphs")
    rng = np.random.default_rng(seed)
    if strategy == "random":
        chosen = [int(i) for i in rng.choice(population, size=size, replace=False)]
    elif strategy == "medoid":
        chosen = _kmedoids(subgraphs, size, rng)
    else:
        raise InvalidInputError(f"unknown codebook strategy {strategy!r}")
    return Codebook(tuple(subgraphs[i] for i in chosen), sigma, strategy, seed)


def soft_assign(g: Subgraph, codebook: Codebook) -> np.ndarray:
    """Gaussian-kernel assignment of ``g`` to every codeword, normalized to sum to 1."""
    return _soft_rows(codebook.dissimilarities([g]), codebook.sigma)[0]


# -- spaces ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbeddingSpace:
    kind: EmbeddingKind
    items: tuple[ItemId, ...]
    codebook: Codebook | None = None
    item_index: Mapping[ItemId, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EmbeddingKind(self.kind))
        object.__setattr__(self, "items", tuple(self.items))
        if len(set(self.items)) != len(self.items):
            raise InvalidInputError("embedding space items must be unique")
        object.__setattr__(self, "item_index", MappingProxyType({it: i for i, it in enumerate(self.items)}))
        if self.kind is EmbeddingKind.KERNEL and self.codebook is None:
            raise InvalidInputError("kernel embedding space needs a codebook")
        if self.kind is not EmbeddingKind.KERNEL and not self.items:
            raise InvalidInputError("vertex/hybrid embedding space needs items")

    @classmethod
    def vertex(cls, items: Iterable[ItemId]) -> "EmbeddingSpace":
        return cls(EmbeddingKind.VERTEX, tuple(items))

    @classmethod
    def hybrid(cls, items: Iterable[ItemId]) -> "EmbeddingSpace":
        return cls(EmbeddingKind.HYBRID, tuple(items))

    @classmethod
    def kernel(cls, codebook: Codebook, items: Iterable[ItemId] = ()) -> "EmbeddingSpace":
        return cls(EmbeddingKind.KERNEL, tuple(items), codebook)

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def dimension(self) -> int:
        if self.kind is EmbeddingKind.VERTEX:
            return self.n
        if self.kind is EmbeddingKind.HYBRID:
            return hybrid_dimension(self.n)
        return len(self.codebook)

    def embed(self, fg: FusionGraph) -> FusionVector:
        if self.kind is EmbeddingKind.VERTEX:
            return embed_vertex(fg, self)
        if self.kind is EmbeddingKind.HYBRID:
            return embed_hybrid(fg, self)
        return embed_kernel(fg, self)

    def to_json(self) -> dict:
        return {
            "format": SPACE_FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind.value,
            "items": list(self.items),
            "codebook": self.codebook.to_json() if self.codebook is not None else None,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EmbeddingSpace":
        if obj.get("format") != SPACE_FORMAT or obj.get("version") != FORMAT_VERSION:
            raise InvalidInputError("not a version-1 fusionvec embedding space")
        cb = Codebook.from_json(obj["codebook"]) if obj.get("codebook") else None
        return cls(EmbeddingKind(obj["kind"]), tuple(obj["items"]), cb)


def dumps_json(obj: Mapping) -> str:
    """Canonical JSON text, so identical artifacts are byte-identical."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _index_of(space: EmbeddingSpace, item: ItemId) -> int:
    try:
        return space.item_index[item]
    except KeyError:
        raise UnknownItemError(f"item {item!r} is not in the embedding space") from None


def embed_vertex(fg: FusionGraph, space: EmbeddingSpace) -> FusionVector:
    entries = {_index_of(space, v): w for v, w in fg.vertices.items()}
    return FusionVector.from_mapping(space.n, entries)


def embed_hybrid(fg: FusionGraph, space: EmbeddingSpace) -> FusionVector:
    n = space.n
    entries = {_index_of(space, v): w for v, w in fg.vertices.items()}
    for (a, b), w in fg.edges.items():
        k = pair_index(_index_of(space, a), _index_of(space, b), n)
        entries[k] = entries.get(k, 0.0) + w
    return FusionVector.from_mapping(hybrid_dimension(n), entries)


def embed_kernel(fg: FusionGraph, space: EmbeddingSpace) -> FusionVector:
    """Average-pooled soft assignments of the graph's subgraphs."""
    codebook = space.codebook
    if codebook is None:
        raise InvalidInputError("kernel embedding needs a codebook")
    subgraphs = extract_subgraphs(fg)
    if not subgraphs:
        return FusionVector(len(codebook), np.empty(0, dtype=np.int64), np.empty(0))
    pooled = _soft_rows(codebook.dissimilarities(subgraphs), codebook.sigma).mean(axis=0)
    return FusionVector.from_dense(pooled)
