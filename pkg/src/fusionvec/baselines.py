"""Reference rank aggregation functions: RRF, Borda, CombSUM and median rank."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Callable

from fusionvec.ranks import ItemId, Rank, RankEntry, RankSet

DEFAULT_RRF_K = 60.0


@dataclass(frozen=True)
class AggregatedRank:
    query: ItemId
    entries: tuple[RankEntry, ...]
    method: str

    @property
    def items(self) -> list[ItemId]:
        return [e.item for e in self.entries]

    def as_rank(self) -> Rank:
        return Rank(self.method, self.query, self.entries)


def _union(rank_set: RankSet) -> list[ItemId]:
    seen: dict[ItemId, None] = {}
    for rank in rank_set.ranks:
        for item in rank.items:
            seen.setdefault(item, None)
    return list(seen)


def _by_descending(rank_set: RankSet, scores: dict[ItemId, float], method: str) -> AggregatedRank:
    rank = Rank.from_scored(method, rank_set.query, scores.items(), higher_is_better=True)
    return AggregatedRank(rank_set.query, rank.entries, method)


def rrf(rank_set: RankSet, k: float = DEFAULT_RRF_K) -> AggregatedRank:
    """Reciprocal rank fusion: sum of ``1 / (k + position)`` over the ranks holding an item."""
    if k <= 0:
        raise ValueError(f"RRF constant must be > 0, got {k}")
    scores: dict[ItemId, float] = {}
    for rank in rank_set.ranks:
        for e in rank.entries:
            scores[e.item] = scores.get(e.item, 0.0) + 1.0 / (k + e.position)
    return _by_descending(rank_set, scores, "rrf")


def _cutoff(rank_set: RankSet, cutoff: int | None) -> int:
    if cutoff is not None:
        return cutoff
    return max((len(r) for r in rank_set.ranks), default=0)


def borda(rank_set: RankSet, cutoff: int | None = None) -> AggregatedRank:
    """Borda count with ``L + 1 - position`` points per rank; absent items score nothing."""
    length = _cutoff(rank_set, cutoff)
    scores: dict[ItemId, float] = {}
    for rank in rank_set.ranks:
        for e in rank.entries:
            scores[e.item] = scores.get(e.item, 0.0) + (length + 1 - e.position)
    return _by_descending(rank_set, scores, "borda")


def comb_sum(rank_set: RankSet) -> AggregatedRank:
    scores: dict[ItemId, float] = {}
    for rank in rank_set.ranks:
        for e in rank.entries:
            scores[e.item] = scores.get(e.item, 0.0) + e.score
    return _by_descending(rank_set, scores, "combsum")


def median_rank(rank_set: RankSet, cutoff: int | None = None) -> AggregatedRank:
    """Order by the median position across ranks, an absent item counting as ``L + 1``."""
    length = _cutoff(rank_set, cutoff)
    keys = {
        item: statistics.median(r.position(item) or length + 1 for r in rank_set.ranks)
        for item in _union(rank_set)
    }
    ordered = sorted(keys, key=lambda i: (keys[i], i))
    # express as a similarity so the result is a regular rank: smaller median -> larger score
    entries = tuple(
        RankEntry(item, 1.0 / keys[item], pos) for pos, item in enumerate(ordered, start=1)
    )
    return AggregatedRank(rank_set.query, entries, "medianrank")


BASELINES: dict[str, Callable[[RankSet], AggregatedRank]] = {
    "rrf": rrf,
    "borda": borda,
    "combsum": comb_sum,
    "medianrank": median_rank,
}
