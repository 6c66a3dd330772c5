"""Effectiveness metrics, winning numbers and per-stage query timing."""

from __future__ import annotations

import math
import os
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from fusionvec.baselines import BASELINES
from fusionvec.errors import InvalidInputError, ParseError
from fusionvec.pipeline import (
    FV_METHODS,
    EmbeddingParams,
    FusionRetriever,
    IndexParams,
    Stage,
    _map,
    baseline_stages,
    check_method,
    single_stages,
)
from fusionvec.ranks import ItemId, Rank
from fusionvec.store import RankStore

STAGES = ("extraction", "embedding", "retrieval")
DEFAULT_REPETITIONS = 5


class Qrels:
    """Binary relevance judgements; unjudged pairs are non-relevant."""

    def __init__(self, relevant: Mapping[ItemId, Iterable[ItemId]] | None = None):
        self._rel: dict[ItemId, frozenset[ItemId]] = {q: frozenset(items) for q, items in (relevant or {}).items()}

    @classmethod
    def from_labels(cls, labels: Mapping[ItemId, str]) -> "Qrels":
        by_class: dict[str, set[ItemId]] = defaultdict(set)
        for item, c in labels.items():
            by_class[c].add(item)
        return cls({item: by_class[c] for item, c in labels.items()})

    def relevant(self, query: ItemId) -> frozenset[ItemId]:
        return self._rel.get(query, frozenset())

    def __call__(self, query: ItemId, item: ItemId) -> int:
        return int(item in self._rel.get(query, ()))

    def queries(self) -> list[ItemId]:
        return sorted(self._rel)


def read_qrels(path: str | os.PathLike) -> Qrels:
    """Read ``<query> <item> <0|1>`` lines, or ``<item> <class>`` label lines."""
    relevant: dict[ItemId, set[ItemId]] = defaultdict(set)
    labels: dict[ItemId, str] = {}
    kind = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            this = "qrels" if len(parts) == 3 else "labels" if len(parts) == 2 else None
            if this is None or (kind is not None and this != kind):
                raise ParseError("expected '<query> <item> <0|1>' or '<item> <class>'", str(path), lineno)
            kind = this
            if this == "qrels":
                q, item, rel = parts
                if rel not in ("0", "1"):
                    raise ParseError(f"relevance must be 0 or 1, got {rel!r}", str(path), lineno)
                relevant.setdefault(q, set())
                if rel == "1":
                    relevant[q].add(item)
            else:
                labels[parts[0]] = parts[1]
    if kind == "labels":
        return Qrels.from_labels(labels)
    return Qrels(relevant)


def _items(rank: Rank | Sequence[ItemId]) -> list[ItemId]:
    return rank.items if isinstance(rank, Rank) else list(rank)


def ndcg_at_k(rank: Rank | Sequence[ItemId], qrels: Qrels, k: int = 10, query: ItemId | None = None) -> float:
    """Binary-gain NDCG@k with a log2(i + 1) discount; 0.0 when nothing is relevant."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if query is None:
        if not isinstance(rank, Rank):
            raise InvalidInputError("query id required when ranking a plain list")
        query = rank.query
    relevant = qrels.relevant(query)
    if not relevant:
        return 0.0
    items = _items(rank)[:k]
    dcg = sum(1.0 / math.log2(i + 2) for i, item in enumerate(items) if item in relevant)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, len(relevant))))
    return dcg / idcg


def ns_score(rank: Rank | Sequence[ItemId], qrels: Qrels, query: ItemId | None = None) -> int:
    """Number of relevant items among the first four."""
    if query is None:
        query = rank.query  # type: ignore[union-attr]
    relevant = qrels.relevant(query)
    return sum(1 for item in _items(rank)[:4] if item in relevant)


def metric_function(name: str) -> Callable[[Rank, Qrels], float]:
    """Resolve ``ndcg@K`` or ``ns``."""
    name = name.lower()
    if name == "ns":
        return lambda rank, qrels: float(ns_score(rank, qrels))
    if name.startswith("ndcg@"):
        try:
            k = int(name[5:])
        except ValueError:
            raise InvalidInputError(f"bad metric {name!r}") from None
        return lambda rank, qrels: ndcg_at_k(rank, qrels, k)
    raise InvalidInputError(f"unknown metric {name!r} (use ndcg@K or ns)")


# -- winning numbers ---------------------------------------------------------

PerformanceTable = dict[tuple[str, str, str], float]


def winning_numbers(table: Mapping[tuple[str, str, str], float]) -> dict[str, int]:
    """Count, per method, the (dataset, configuration, rival) triples it strictly beats."""
    methods = sorted({m for m, _, _ in table})
    cells = sorted({(d, c) for _, d, c in table})
    missing = [(m, d, c) for d, c in cells for m in methods if (m, d, c) not in table]
    if missing:
        raise InvalidInputError(f"performance table incomplete, missing cells: {missing}")
    wins = {m: 0 for m in methods}
    for d, c in cells:
        for m in methods:
            pm = table[(m, d, c)]
            wins[m] += sum(1 for rival in methods if pm > table[(rival, d, c)])
    return wins


# -- timing ------------------------------------------------------------------


@dataclass
class TimingEntry:
    query: ItemId
    repetitions: list[dict[str, float]]

    def mean(self, stage: str) -> float:
        return sum(r[stage] for r in self.repetitions) / len(self.repetitions)

    @property
    def total(self) -> float:
        return sum(self.mean(s) for s in STAGES)


@dataclass
class TimingReport:
    entries: list[TimingEntry] = field(default_factory=list)

    def mean_seconds(self, stage: str) -> float:
        if not self.entries:
            return 0.0
        if stage == "total":
            return sum(e.total for e in self.entries) / len(self.entries)
        return sum(e.mean(stage) for e in self.entries) / len(self.entries)

    def mean_ms(self) -> dict[str, float]:
        return {s: 1e3 * self.mean_seconds(s) for s in (*STAGES, "total")}


def run_stages(stages: Sequence[Stage], value: Any) -> tuple[Any, dict[str, float]]:
    """Feed ``value`` through the stages in order, timing each with a monotonic clock."""
    times = {s: 0.0 for s in STAGES}
    for name, fn in stages:
        start = time.perf_counter()
        value = fn(value)
        times[name] = times.get(name, 0.0) + time.perf_counter() - start
    return value, times


def timed_query(
    stages: Sequence[Stage],
    query: Any,
    repetitions: int = DEFAULT_REPETITIONS,
    warmup: int = 1,
    query_id: ItemId | None = None,
) -> tuple[Any, TimingEntry]:
    """Run the pipeline ``warmup`` times untimed, then ``repetitions`` timed runs."""
    if repetitions < 1:
        raise InvalidInputError("need at least one timed repetition")
    result = None
    for _ in range(warmup):
        result, _ = run_stages(stages, query)
    reps = []
    for _ in range(repetitions):
        result, times = run_stages(stages, query)
        reps.append(times)
    return result, TimingEntry(query_id if query_id is not None else str(query), reps)


@dataclass
class ProtocolResult:
    method: str
    metric: str
    mean: float
    per_query: dict[ItemId, float]
    no_relevant: list[ItemId]
    timing: TimingReport | None
    ranks: dict[ItemId, Rank]


def run_protocol(
    store: RankStore,
    method: str,
    qrels: Qrels,
    metric: str = "ndcg@10",
    rankers: Sequence[str] | None = None,
    depth: int | None = None,
    retriever: FusionRetriever | None = None,
    embedding: EmbeddingParams = EmbeddingParams(),
    index: IndexParams = IndexParams(),
    repetitions: int = 0,
    queries: Sequence[ItemId] | None = None,
    threads: int = 1,
) -> ProtocolResult:
    """Evaluate ``method`` with every collection item as a query (ad-hoc protocol).

    ``repetitions > 0`` also times each query (one warm-up run, then that many
    timed runs); timed runs are always sequential, untimed ones spread over
    ``threads`` workers with results kept in query order. FV methods reuse
    ``retriever`` when given, else model the collection under ``rankers`` first.
    """
    rankers = tuple(rankers) if rankers is not None else store.rankers
    check_method(method, rankers)
    score = metric_function(metric)
    depth = depth or store.cutoff
    queries = list(queries) if queries is not None else list(store.items)

    if method == "best-single":
        best = None
        for r in rankers:
            res = run_protocol(
                store, f"single:{r}", qrels, metric, rankers, depth,
                repetitions=repetitions, queries=queries, threads=threads,
            )
            if best is None or res.mean > best.mean:
                best = res
        assert best is not None
        best.method = "best-single"
        return best

    if method in FV_METHODS:
        kind, fast = FV_METHODS[method]
        if retriever is None:
            retriever = FusionRetriever.build(store.subset(rankers), kind, embedding, index)
        elif retriever.space.kind is not kind or retriever.rankers != rankers:
            raise InvalidInputError(f"retriever does not match method {method!r} and rankers {rankers}")

        def stages_for(q: ItemId) -> list[Stage]:
            return retriever.stages(depth, fast, q)

    elif method in BASELINES:

        def stages_for(q: ItemId) -> list[Stage]:
            return baseline_stages(store, method, depth, rankers)

    else:
        ranker = method[len("single:") :]

        def stages_for(q: ItemId) -> list[Stage]:
            return single_stages(store, ranker, depth)

    per_query: dict[ItemId, float] = {}
    ranks: dict[ItemId, Rank] = {}
    no_relevant: list[ItemId] = []
    timing = TimingReport() if repetitions > 0 else None
    if timing is None:
        results = _map(lambda q: run_stages(stages_for(q), q)[0], queries, threads)
    else:
        results = []
        for q in queries:
            rank, entry = timed_query(stages_for(q), q, repetitions, query_id=q)
            timing.entries.append(entry)
            results.append(rank)
    for q, rank in zip(queries, results):
        ranks[q] = rank
        per_query[q] = score(rank, qrels)
        if not qrels.relevant(q):
            no_relevant.append(q)
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return ProtocolResult(method, metric, mean, per_query, no_relevant, timing, ranks)
