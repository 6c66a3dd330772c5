"""Ranks, rank sets and score normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from fusionvec.errors import InvalidInputError

ItemId = str


class NormalizationMode(str, Enum):
    ALREADY_SIMILARITY = "already-similarity"
    MIN_MAX_INVERT = "min-max-invert"
    RECIPROCAL_INVERT = "reciprocal-invert"

    @classmethod
    def parse(cls, value: "str | NormalizationMode") -> "NormalizationMode":
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise InvalidInputError(f"unknown normalization mode {value!r} (expected one of {choices})") from None

    @property
    def input_is_similarity(self) -> bool:
        return self is NormalizationMode.ALREADY_SIMILARITY


@dataclass(frozen=True, slots=True)
class RankEntry:
    item: ItemId
    score: float
    position: int

    def __post_init__(self) -> None:
        if not self.item:
            raise InvalidInputError("empty item id")
        if not self.score >= 0.0:  # also rejects NaN
            raise InvalidInputError(f"negative or NaN score {self.score!r} for item {self.item!r}")
        if self.position < 1:
            raise InvalidInputError(f"position must be >= 1, got {self.position}")


@dataclass(frozen=True)
class Rank:
    """Ranked list produced by one ranker for one query.

    ``higher_is_better`` is False only for raw dissimilarity ranks (fresh from
    ``exact_search`` or a distance run file), which are ordered by ascending
    score. Everything downstream of normalization works on similarity ranks.
    """

    ranker: str
    query: ItemId
    entries: tuple[RankEntry, ...]
    higher_is_better: bool = True
    _positions: dict[ItemId, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        positions: dict[ItemId, int] = {}
        prev: float | None = None
        for expected, entry in enumerate(self.entries, start=1):
            if entry.position != expected:
                raise InvalidInputError(
                    f"rank ({self.ranker!r}, {self.query!r}): position {entry.position} at slot {expected}"
                )
            if entry.item in positions:
                raise InvalidInputError(f"rank ({self.ranker!r}, {self.query!r}): duplicate item {entry.item!r}")
            if prev is not None and (entry.score > prev if self.higher_is_better else entry.score < prev):
                raise InvalidInputError(f"rank ({self.ranker!r}, {self.query!r}): scores out of order at {expected}")
            positions[entry.item] = expected
            prev = entry.score
        object.__setattr__(self, "_positions", positions)

    @classmethod
    def from_scored(
        cls,
        ranker: str,
        query: ItemId,
        scored: Iterable[tuple[ItemId, float]],
        higher_is_better: bool = True,
        cutoff: int | None = None,
    ) -> "Rank":
        """Sort ``(item, score)`` pairs canonically (ties by item id) and assign positions."""
        if higher_is_better:
            ordered = sorted(scored, key=lambda p: (-p[1], p[0]))
        else:
            ordered = sorted(scored, key=lambda p: (p[1], p[0]))
        if cutoff is not None:
            ordered = ordered[:cutoff]
        entries = tuple(RankEntry(item, float(score), pos) for pos, (item, score) in enumerate(ordered, start=1))
        return cls(ranker, query, entries, higher_is_better)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, item: object) -> bool:
        return item in self._positions

    @property
    def items(self) -> list[ItemId]:
        return [e.item for e in self.entries]

    @property
    def scores(self) -> list[float]:
        return [e.score for e in self.entries]

    def position(self, item: ItemId) -> int | None:
        return self._positions.get(item)

    def score(self, item: ItemId) -> float | None:
        pos = self._positions.get(item)
        return None if pos is None else self.entries[pos - 1].score

    def truncated(self, length: int) -> "Rank":
        if length >= len(self.entries):
            return self
        return Rank(self.ranker, self.query, self.entries[:length], self.higher_is_better)

    def with_scores(self, scores: Sequence[float]) -> "Rank":
        entries = tuple(RankEntry(e.item, float(s), e.position) for e, s in zip(self.entries, scores, strict=True))
        return Rank(self.ranker, self.query, entries, higher_is_better=True)


@dataclass(frozen=True)
class RankSet:
    """The ranks of one query, one per ranker, in a fixed ranker order."""

    query: ItemId
    ranks: tuple[Rank, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranks", tuple(self.ranks))
        seen: set[str] = set()
        for rank in self.ranks:
            if rank.query != self.query:
                raise InvalidInputError(f"rank for query {rank.query!r} in rank set of {self.query!r}")
            if rank.ranker in seen:
                raise InvalidInputError(f"duplicate ranker {rank.ranker!r} in rank set of {self.query!r}")
            seen.add(rank.ranker)

    @property
    def rankers(self) -> tuple[str, ...]:
        return tuple(r.ranker for r in self.ranks)

    def __len__(self) -> int:
        return len(self.ranks)

    def __iter__(self):
        return iter(self.ranks)


def normalize_scores(
    rank: Rank,
    mode: NormalizationMode | str = NormalizationMode.MIN_MAX_INVERT,
    bounds: tuple[float, float] | None = None,
) -> Rank:
    """Turn a rank's raw scores into similarities, keeping order and positions.

    ``bounds`` overrides the per-rank ``(min, max)`` used by the min-max and
    divide-by-max modes; pass ranker-wide bounds for global normalization.
    """
    mode = NormalizationMode.parse(mode)
    if not rank.entries:
        raise InvalidInputError(f"cannot normalize empty rank ({rank.ranker!r}, {rank.query!r})")
    raw = rank.scores
    if any(s < 0 for s in raw):
        raise InvalidInputError(f"negative score in rank ({rank.ranker!r}, {rank.query!r})")
    lo, hi = bounds if bounds is not None else (min(raw), max(raw))

    if mode is NormalizationMode.MIN_MAX_INVERT:
        span = hi - lo
        if span <= 0.0:
            scores = [1.0] * len(raw)
        else:
            scores = [min(1.0, max(0.0, (hi - d) / span)) for d in raw]
    elif mode is NormalizationMode.RECIPROCAL_INVERT:
        scores = [1.0 / (1.0 + d) for d in raw]
    else:
        scores = [1.0] * len(raw) if hi <= 0.0 else [min(1.0, s / hi) for s in raw]
    return rank.with_scores(scores)


def exact_search(
    comparisons: Iterable[tuple[ItemId, float]],
    cutoff: int | None = None,
    ranker: str = "exact",
    query: ItemId = "query",
) -> Rank:
    """Rank items by ascending dissimilarity (argsort), ties by item id, cut at ``cutoff``."""
    pairs = list(comparisons)
    if not pairs:
        raise InvalidInputError("exact_search needs at least one comparison")
    for item, d in pairs:
        if not (d >= 0.0 and math.isfinite(d)):
            raise InvalidInputError(f"invalid dissimilarity {d!r} for item {item!r}")
    return Rank.from_scored(ranker, query, pairs, higher_is_better=False, cutoff=cutoff)
