"""Collection manifests, run files and the precomputed rank store."""

from __future__ import annotations

import configparser
import io
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

from fusionvec.errors import IncompleteStoreError, InvalidInputError, ParseError
from fusionvec.ranks import ItemId, NormalizationMode, Rank, RankSet, normalize_scores

NORMALIZATION_SCOPES = ("rank", "ranker")


@dataclass(frozen=True)
class Manifest:
    name: str
    items: tuple[ItemId, ...]
    rankers: tuple[str, ...]
    modes: Mapping[str, NormalizationMode]
    cutoff: int
    scope: str = "rank"

    def __post_init__(self) -> None:
        if len(set(self.items)) != len(self.items):
            raise InvalidInputError("duplicate item ids in manifest")
        if any(not i for i in self.items):
            raise InvalidInputError("empty item id in manifest")
        if len(set(self.rankers)) != len(self.rankers) or not self.rankers:
            raise InvalidInputError("manifest needs at least one ranker, without duplicates")
        if self.cutoff < 1:
            raise InvalidInputError(f"cut-off must be >= 1, got {self.cutoff}")
        if self.scope not in NORMALIZATION_SCOPES:
            raise InvalidInputError(f"normalization scope must be one of {NORMALIZATION_SCOPES}")
        missing = [r for r in self.rankers if r not in self.modes]
        if missing:
            raise InvalidInputError(f"no normalization mode for rankers {missing}")

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # type: ignore[assignment]
        cp["collection"] = {"name": self.name, "cutoff": str(self.cutoff), "items": " ".join(self.items)}
        cp["rankers"] = {r: self.modes[r].value for r in self.rankers}
        cp["normalization"] = {"scope": self.scope}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def read_manifest(path: str | os.PathLike) -> Manifest:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # type: ignore[assignment]
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ParseError(str(exc).splitlines()[0], str(path)) from None
    for section in ("collection", "rankers"):
        if section not in cp:
            raise ParseError(f"missing [{section}] section", str(path))
    coll = cp["collection"]
    if "items" in coll:
        items = tuple(coll["items"].split())
    elif "items_file" in coll:
        items_path = path.parent / coll["items_file"]
        with open(items_path, encoding="utf-8") as fh:
            items = tuple(tok for line in fh for tok in line.split("#", 1)[0].split())
    else:
        raise ParseError("[collection] needs 'items' or 'items_file'", str(path))
    try:
        cutoff = int(coll.get("cutoff", coll.get("L", "")))
    except ValueError:
        raise ParseError("[collection] needs an integer 'cutoff'", str(path)) from None
    rankers = tuple(cp["rankers"].keys())
    modes = {r: NormalizationMode.parse(cp["rankers"][r].strip() or "min-max-invert") for r in rankers}
    scope = cp.get("normalization", "scope", fallback="rank").strip()
    return Manifest(coll.get("name", path.stem), items, rankers, modes, cutoff, scope)


@dataclass(frozen=True)
class RankStore:
    """Offline table of ranks, ``(ranker, query) -> Rank``, for every collection item."""

    rankers: tuple[str, ...]
    table: Mapping[tuple[str, ItemId], Rank]
    cutoff: int
    items: tuple[ItemId, ...] = ()
    _item_set: frozenset[ItemId] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rankers", tuple(self.rankers))
        if not self.items:
            object.__setattr__(self, "items", tuple(sorted({q for _, q in self.table})))
        object.__setattr__(self, "_item_set", frozenset(self.items))
        for (ranker, query), rank in self.table.items():
            if len(rank) > self.cutoff:
                raise InvalidInputError(f"rank ({ranker!r}, {query!r}) longer than cut-off {self.cutoff}")

    @classmethod
    def from_ranks(cls, ranks: Iterable[Rank], cutoff: int, rankers: Sequence[str] | None = None) -> "RankStore":
        ranks = list(ranks)
        table = {(r.ranker, r.query): r for r in ranks}
        if rankers is None:
            rankers = list(dict.fromkeys(r.ranker for r in ranks))
        return cls(tuple(rankers), table, cutoff)

    def __contains__(self, item: object) -> bool:
        return item in self._item_set

    def rank(self, ranker: str, query: ItemId) -> Rank:
        try:
            return self.table[(ranker, query)]
        except KeyError:
            raise IncompleteStoreError([(ranker, query)]) from None

    def rank_set(self, query: ItemId, rankers: Sequence[str] | None = None) -> RankSet:
        rankers = self.rankers if rankers is None else tuple(rankers)
        missing = [(r, query) for r in rankers if (r, query) not in self.table]
        if missing:
            raise IncompleteStoreError(missing)
        return RankSet(query, tuple(self.table[(r, query)] for r in rankers))

    def subset(self, rankers: Sequence[str]) -> "RankStore":
        unknown = [r for r in rankers if r not in self.rankers]
        if unknown:
            raise InvalidInputError(f"unknown rankers {unknown}")
        table = {k: v for k, v in self.table.items() if k[0] in rankers}
        return RankStore(tuple(rankers), table, self.cutoff, self.items)

    def missing_pairs(self) -> list[tuple[str, ItemId]]:
        """(ranker, item) pairs required by the closed-world invariant but absent."""
        needed = set(self.items)
        for rank in self.table.values():
            needed.update(rank.items)
        return [(r, i) for r in self.rankers for i in sorted(needed) if (r, i) not in self.table]

    def verify_closed_world(self) -> None:
        missing = self.missing_pairs()
        if missing:
            raise IncompleteStoreError(missing)


# -- run files -------------------------------------------------------------

RawRuns = dict[tuple[str, ItemId], list[tuple[int, ItemId, float]]]


def parse_run_lines(lines: Iterable[str], path: str | None = None, into: RawRuns | None = None) -> RawRuns:
    """Parse ``<query> <ranker> <item> <position> <score>`` lines."""
    runs: RawRuns = into if into is not None else defaultdict(list)
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", path, lineno)
        query, ranker, item, pos_s, score_s = parts
        try:
            pos = int(pos_s)
            score = float(score_s)
        except ValueError:
            raise ParseError(f"bad position/score {pos_s!r} {score_s!r}", path, lineno) from None
        if pos < 1:
            raise ParseError(f"position must be >= 1, got {pos}", path, lineno)
        if not score >= 0.0:
            raise ParseError(f"score must be non-negative, got {score_s}", path, lineno)
        runs[(ranker, query)].append((pos, item, score))
    return runs


def read_runs(paths: Iterable[str | os.PathLike]) -> RawRuns:
    runs: RawRuns = defaultdict(list)
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            parse_run_lines(fh, str(p), into=runs)
    return runs


def write_run(ranks: Iterable[Rank], fh: TextIO, ranker: str | None = None) -> None:
    for rank in ranks:
        tag = ranker or rank.ranker
        for e in rank.entries:
            fh.write(f"{rank.query} {tag} {e.item} {e.position} {e.score:.12g}\n")


def ranks_from_raw(runs: RawRuns, modes: Mapping[str, NormalizationMode]) -> dict[tuple[str, ItemId], Rank]:
    """Turn parsed lines into canonical raw-score ranks (not yet normalized or truncated)."""
    out: dict[tuple[str, ItemId], Rank] = {}
    for (ranker, query), rows in runs.items():
        if ranker not in modes:
            raise ParseError(f"ranker {ranker!r} not declared in manifest")
        rows = sorted(rows)
        positions = [r[0] for r in rows]
        if len(set(positions)) != len(positions):
            raise ParseError(f"duplicate positions in rank ({ranker!r}, {query!r})")
        similarity = modes[ranker].input_is_similarity
        scores = [r[2] for r in rows]
        ordered = all(a >= b for a, b in zip(scores, scores[1:])) if similarity else all(
            a <= b for a, b in zip(scores, scores[1:])
        )
        if not ordered:
            raise ParseError(f"scores disagree with positions in rank ({ranker!r}, {query!r})")
        if len({r[1] for r in rows}) != len(rows):
            raise ParseError(f"duplicate items in rank ({ranker!r}, {query!r})")
        out[(ranker, query)] = Rank.from_scored(ranker, query, [(r[1], r[2]) for r in rows], similarity)
    return out


def build_store(
    raw: Mapping[tuple[str, ItemId], Rank],
    items: Sequence[ItemId],
    rankers: Sequence[str],
    modes: Mapping[str, NormalizationMode],
    cutoff: int,
    scope: str = "rank",
) -> RankStore:
    """Truncate to ``cutoff``, normalize, and check closed-world completeness."""
    item_set = set(items)
    missing = [(r, q) for r in rankers for q in items if (r, q) not in raw]
    if missing:
        raise IncompleteStoreError(missing)
    truncated: dict[tuple[str, ItemId], Rank] = {}
    for key, rank in raw.items():
        if key[0] not in rankers:
            continue
        if key[1] not in item_set:
            raise InvalidInputError(f"query {key[1]!r} of ranker {key[0]!r} is not a manifest item")
        stray = [i for i in rank.items if i not in item_set]
        if stray:
            raise InvalidInputError(f"rank {key} retrieves unknown items {stray[:5]}")
        if len(rank) == 0:
            raise InvalidInputError(f"empty rank {key}")
        truncated[key] = rank.truncated(cutoff)

    bounds: dict[str, tuple[float, float]] = {}
    if scope == "ranker":
        for (ranker, _), rank in truncated.items():
            lo, hi = bounds.get(ranker, (float("inf"), float("-inf")))
            bounds[ranker] = (min(lo, min(rank.scores)), max(hi, max(rank.scores)))
    table = {
        key: normalize_scores(rank, modes[key[0]], bounds.get(key[0]))
        for key, rank in truncated.items()
    }
    store = RankStore(tuple(rankers), table, cutoff, tuple(items))
    store.verify_closed_world()
    return store


def load_rank_store(
    manifest: Manifest | str | os.PathLike,
    run_files: Iterable[str | os.PathLike],
    cutoff: int | None = None,
    modes: Mapping[str, NormalizationMode | str] | None = None,
) -> RankStore:
    if not isinstance(manifest, Manifest):
        manifest = read_manifest(manifest)
    resolved = dict(manifest.modes)
    if modes:
        resolved.update({r: NormalizationMode.parse(m) for r, m in modes.items()})
    raw = ranks_from_raw(read_runs(run_files), resolved)
    return build_store(
        raw,
        manifest.items,
        manifest.rankers,
        resolved,
        cutoff if cutoff is not None else manifest.cutoff,
        manifest.scope,
    )
