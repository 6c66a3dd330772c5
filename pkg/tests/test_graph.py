from __future__ import annotations

import io
import random

import pytest
from oracles import fusion_graph_oracle, random_store

from fusionvec.errors import IncompleteStoreError, InvalidInputError
from fusionvec.graph import FusionGraph, dump_graph, extract_fusion_graph, graph_stats
from fusionvec.ranks import Rank, RankSet
from fusionvec.store import RankStore


class TestExtractFusionGraph:
    def test_vertex_weight_sums_over_ranks(self):
        ranks = [
            Rank.from_scored("r1", "q", [("q", 1.0), ("a", 0.9)]),
            Rank.from_scored("r2", "q", [("q", 1.0), ("a", 0.7)]),
            Rank.from_scored("r1", "a", [("a", 1.0)]),
            Rank.from_scored("r2", "a", [("a", 1.0)]),
        ]
        fg = extract_fusion_graph(RankStore.from_ranks(ranks, 2).rank_set("q"), RankStore.from_ranks(ranks, 2))
        assert fg.vertices["a"] == pytest.approx(1.6, abs=1e-15)

    def test_edge_divides_by_position_of_source(self, hand_store):
        fg = extract_fusion_graph(hand_store.rank_set("q"), hand_store)
        assert fg.edges[("a", "q")] == pytest.approx(0.2, abs=1e-15)
        # q at position 1 in its own rank, a scored 0.5 in tau_q
        assert fg.edges[("q", "a")] == pytest.approx(0.5, abs=1e-15)

    def test_self_only_rank_set(self):
        ranks = [Rank.from_scored("r1", "q", [("q", 1.0)])]
        store = RankStore.from_ranks(ranks, 1)
        fg = extract_fusion_graph(store.rank_set("q"), store)
        assert fg.vertices == {"q": 1.0} and fg.edges == {}

    def test_missing_lookup_raises(self):
        store = RankStore.from_ranks([Rank.from_scored("r1", "q", [("q", 1.0), ("b", 0.5)])], 2)
        with pytest.raises(IncompleteStoreError) as err:
            extract_fusion_graph(store.rank_set("q"), store)
        assert ("r1", "b") in err.value.missing

    def test_unknown_ranker(self, hand_store):
        rs = RankSet("q", (Rank.from_scored("zz", "q", [("q", 1.0)]),))
        with pytest.raises(InvalidInputError):
            extract_fusion_graph(rs, hand_store)

    def test_matches_triple_loop_oracle(self):
        rng = random.Random(99)
        for _ in range(100):
            m, length = rng.randint(1, 3), rng.randint(1, 5)
            store = random_store(rng, rng.randint(1, 8), m, length, self_first=rng.random() < 0.7)
            for q in store.items:
                fg = extract_fusion_graph(store.rank_set(q), store)
                vertices, edges = fusion_graph_oracle(q, store)
                assert fg.vertices.keys() == vertices.keys()
                assert fg.edges.keys() == edges.keys()
                for k, v in vertices.items():
                    assert abs(fg.vertices[k] - v) <= 1e-12
                for k, v in edges.items():
                    assert abs(fg.edges[k] - v) <= 1e-12

    def test_invariants_on_random_stores(self):
        rng = random.Random(3)
        for _ in range(30):
            m, length = rng.randint(1, 3), rng.randint(1, 6)
            store = random_store(rng, 10, m, length)
            for q in store.items:
                fg = extract_fusion_graph(store.rank_set(q), store)
                assert len(fg.vertices) <= m * length
                assert all(w > 0 for w in fg.edges.values())
                assert all(a != b for a, b in fg.edges)
                tq = store.rank_set(q)
                for a, b in fg.edges:
                    assert any(a in tau for tau in tq)
                    assert any(b in store.rank(r, a) for r in store.rankers)

    def test_adding_a_ranker_never_lowers_vertex_weights(self):
        rng = random.Random(5)
        for _ in range(20):
            store = random_store(rng, 8, 3, 4)
            for q in store.items:
                small = extract_fusion_graph(store.rank_set(q, store.rankers[:2]), store)
                big = extract_fusion_graph(store.rank_set(q), store)
                for v, w in small.vertices.items():
                    assert big.vertices[v] >= w


class TestFusionGraph:
    def test_dangling_edge_rejected(self):
        with pytest.raises(InvalidInputError):
            FusionGraph("q", {"q": 1.0}, {("q", "x"): 0.5})

    def test_zero_edge_rejected(self):
        with pytest.raises(InvalidInputError):
            FusionGraph("q", {"q": 1.0, "a": 1.0}, {("q", "a"): 0.0})

    def test_successors_sorted(self):
        fg = FusionGraph("q", {"q": 1.0, "a": 1.0, "b": 1.0}, {("q", "b"): 0.1, ("q", "a"): 0.2})
        assert fg.successors("q") == ("a", "b") and fg.successors("a") == ()


class TestGraphStats:
    def test_single_vertex(self):
        assert graph_stats(FusionGraph("q", {"q": 0.8}, {})) == (1, 0, 0.8, 0.0)

    def test_empty(self):
        assert graph_stats(FusionGraph("q", {}, {})) == (0, 0, 0.0, 0.0)

    def test_recount(self, hand_store):
        fg = extract_fusion_graph(hand_store.rank_set("q"), hand_store)
        stats = graph_stats(fg)
        assert stats.vertex_count == len(fg.vertices) and stats.edge_count == len(fg.edges)
        assert stats.total_edge_weight == pytest.approx(sum(fg.edges.values()))


def test_dump_format(hand_store):
    buf = io.StringIO()
    dump_graph(extract_fusion_graph(hand_store.rank_set("q"), hand_store), buf)
    assert buf.getvalue().splitlines() == ["v a 0.5", "v q 1", "e a q 0.2", "e q a 0.5"]
