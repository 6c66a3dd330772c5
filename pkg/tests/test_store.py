from __future__ import annotations

import io
from pathlib import Path

import pytest
from conftest import write_runs

from fusionvec.errors import IncompleteStoreError, InvalidInputError, ParseError
from fusionvec.ranks import NormalizationMode
from fusionvec.store import (
    Manifest,
    load_rank_store,
    parse_run_lines,
    read_manifest,
    write_run,
)

ITEMS = ("d1", "d2", "d3", "d4")


def _manifest(tmp_path: Path, rankers=("r1", "r2"), cutoff=3, scope="rank", items=ITEMS) -> Path:
    modes = {r: NormalizationMode.MIN_MAX_INVERT for r in rankers}
    path = tmp_path / "manifest.ini"
    path.write_text(Manifest("toy", items, rankers, modes, cutoff, scope).to_text(), encoding="utf-8")
    return path


def _distance_runs(rankers=("r1", "r2"), items=ITEMS, skip=()):
    runs = {}
    for r_i, r in enumerate(rankers):
        for q_i, q in enumerate(items):
            if (r, q) in skip:
                continue
            dist = sorted(((abs(q_i - j) + 0.1 * r_i * (j % 2), it) for j, it in enumerate(items)))
            runs[(r, q)] = [(it, d) for d, it in dist]
    return runs


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = read_manifest(_manifest(tmp_path))
        assert m.items == ITEMS and m.rankers == ("r1", "r2") and m.cutoff == 3
        assert m.modes["r1"] is NormalizationMode.MIN_MAX_INVERT

    def test_items_file(self, tmp_path):
        (tmp_path / "items.txt").write_text("a b\n# comment\nc\n")
        (tmp_path / "m.ini").write_text("[collection]\ncutoff = 2\nitems_file = items.txt\n[rankers]\nr1 = reciprocal-invert\n")
        m = read_manifest(tmp_path / "m.ini")
        assert m.items == ("a", "b", "c")
        assert m.modes["r1"] is NormalizationMode.RECIPROCAL_INVERT

    def test_duplicate_items_rejected(self):
        with pytest.raises(InvalidInputError):
            Manifest("x", ("a", "a"), ("r",), {"r": NormalizationMode.MIN_MAX_INVERT}, 2)

    def test_missing_section(self, tmp_path):
        (tmp_path / "m.ini").write_text("[collection]\ncutoff = 2\nitems = a\n")
        with pytest.raises(ParseError):
            read_manifest(tmp_path / "m.ini")


class TestRunFiles:
    def test_parse_with_comments(self):
        runs = parse_run_lines(["# header", "q r1 a 1 0.5  # trailing", "", "q r1 b 2 0.7"])
        assert runs[("r1", "q")] == [(1, "a", 0.5), (2, "b", 0.7)]

    def test_bad_field_count_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_run_lines(["q r1 a 1 0.5", "q r1 b 2"], path="x.run")
        assert err.value.line == 2 and "x.run:2" in str(err.value)

    def test_bad_number(self):
        with pytest.raises(ParseError):
            parse_run_lines(["q r1 a one 0.5"])

    def test_negative_score(self):
        with pytest.raises(ParseError):
            parse_run_lines(["q r1 a 1 -0.5"])

    def test_write_is_reparseable(self, tmp_path):
        runs = _distance_runs()
        write_runs(tmp_path / "a.run", runs)
        store = load_rank_store(_manifest(tmp_path), [tmp_path / "a.run"])
        buf = io.StringIO()
        write_run([store.rank("r1", "d1")], buf)
        again = parse_run_lines(buf.getvalue().splitlines())
        assert [row[1] for row in again[("r1", "d1")]] == store.rank("r1", "d1").items


class TestLoadRankStore:
    def test_counts_and_lengths(self, tmp_path):
        write_runs(tmp_path / "a.run", _distance_runs())
        store = load_rank_store(_manifest(tmp_path, cutoff=3), [tmp_path / "a.run"])
        assert len(store.table) == 8
        assert all(len(r) <= 3 for r in store.table.values())

    def test_truncation_to_exact_length(self, tmp_path):
        items = tuple(f"d{i}" for i in range(10))
        write_runs(tmp_path / "a.run", _distance_runs(items=items))
        store = load_rank_store(_manifest(tmp_path, cutoff=5, items=items), [tmp_path / "a.run"])
        assert all(len(r) == 5 for r in store.table.values())

    def test_missing_query_named(self, tmp_path):
        write_runs(tmp_path / "a.run", _distance_runs(skip={("r2", "d4")}))
        with pytest.raises(IncompleteStoreError) as err:
            load_rank_store(_manifest(tmp_path), [tmp_path / "a.run"])
        assert ("r2", "d4") in err.value.missing

    def test_missing_item_d7(self, tmp_path):
        items = tuple(f"d{i}" for i in range(1, 9))
        write_runs(tmp_path / "a.run", _distance_runs(items=items, skip={("r2", "d7")}))
        with pytest.raises(IncompleteStoreError) as err:
            load_rank_store(_manifest(tmp_path, items=items), [tmp_path / "a.run"])
        assert err.value.missing == [("r2", "d7")]
        assert "'r2'" in str(err.value) and "'d7'" in str(err.value)

    def test_rank_of_first_is_self_with_score_one(self, tmp_path):
        write_runs(tmp_path / "a.run", _distance_runs())
        store = load_rank_store(_manifest(tmp_path), [tmp_path / "a.run"])
        top = store.rank("r1", "d2").entries[0]
        assert (top.item, top.score) == ("d2", 1.0)

    def test_truncate_happens_before_normalize(self, tmp_path):
        # d1 sees distances 0,1,2,3; cut to 3 first, so min-max spans [0, 2]
        runs = {}
        for qi, q in enumerate(ITEMS):
            dist = sorted((abs(qi - j), it) for j, it in enumerate(ITEMS))
            runs[("r1", q)] = [(it, float(d)) for d, it in dist]
        write_runs(tmp_path / "a.run", runs)
        store = load_rank_store(_manifest(tmp_path, rankers=("r1",)), [tmp_path / "a.run"])
        assert store.rank("r1", "d1").scores == [1.0, 0.5, 0.0]

    def test_ranker_scope_uses_global_bounds(self, tmp_path):
        runs = {("r1", q): [(q, 0.0), *[(it, 4.0 if q == "d1" else 2.0) for it in ITEMS if it != q]] for q in ITEMS}
        write_runs(tmp_path / "a.run", runs)
        store = load_rank_store(_manifest(tmp_path, rankers=("r1",), scope="ranker"), [tmp_path / "a.run"])
        assert store.rank("r1", "d2").scores[-1] == 0.5
        local = load_rank_store(_manifest(tmp_path, rankers=("r1",)), [tmp_path / "a.run"])
        assert local.rank("r1", "d2").scores[-1] == 0.0

    def test_positions_disagreeing_with_scores(self, tmp_path):
        (tmp_path / "a.run").write_text("d1 r1 d1 1 0.5\nd1 r1 d2 2 0.1\n")
        with pytest.raises(ParseError):
            load_rank_store(_manifest(tmp_path, rankers=("r1",), items=("d1", "d2")), [tmp_path / "a.run"])

    def test_undeclared_ranker(self, tmp_path):
        (tmp_path / "a.run").write_text("d1 zz d1 1 0.0\n")
        with pytest.raises(ParseError):
            load_rank_store(_manifest(tmp_path, rankers=("r1",), items=("d1",)), [tmp_path / "a.run"])

    def test_unknown_retrieved_item(self, tmp_path):
        (tmp_path / "a.run").write_text("d1 r1 d1 1 0.0\nd1 r1 zz 2 1.0\n")
        with pytest.raises(InvalidInputError):
            load_rank_store(_manifest(tmp_path, rankers=("r1",), items=("d1",)), [tmp_path / "a.run"])

    def test_closed_world(self, tmp_path):
        write_runs(tmp_path / "a.run", _distance_runs())
        store = load_rank_store(_manifest(tmp_path), [tmp_path / "a.run"])
        for rank in store.table.values():
            for item in rank.items:
                assert len(store.rank_set(item)) == len(store.rankers)
