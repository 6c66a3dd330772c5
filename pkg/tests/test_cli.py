from __future__ import annotations

import contextlib
import csv
import io
from pathlib import Path

import pytest

from fusionvec.cli import main
from fusionvec.evaluation import ndcg_at_k, read_qrels
from fusionvec.store import load_rank_store, parse_run_lines


def run(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = main([str(a) for a in argv])
        except SystemExit as exc:  # argparse usage errors
            code = exc.code
    return code, out.getvalue(), err.getvalue()


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def built(tmp_path_factory) -> Path:
    """12-item fixture (3 classes of 4), built for all three embeddings."""
    out = tmp_path_factory.mktemp("fx")
    code, _, err = run("synth", "--out", out, "--classes", 3, "--per-class", 4, "--cutoff", 6, "--seed", 1)
    assert code == 0, err
    code, _, err = run("build", "-c", out / "config.ini", "--codebook-size", 4)
    assert code == 0, err
    return out


def cfg(built: Path, *extra: str) -> list[str]:
    return ["-c", str(built / "config.ini"), "--codebook-size", "4", *extra]


class TestBuild:
    def test_layout(self, built):
        meta = built / "artifacts" / "build.json"
        assert meta.is_file()
        for kind in ("vertex", "hybrid", "kernel"):
            assert (built / "artifacts" / "all" / kind).is_dir()
        assert not list((built).glob(".*tmp*"))

    def test_rebuild_is_byte_identical(self, built, tmp_path):
        code, _, err = run("build", *cfg(built, "--artifacts", tmp_path / "again"))
        assert code == 0, err
        first = sorted(p.relative_to(built / "artifacts") for p in (built / "artifacts").rglob("*") if p.is_file())
        second = sorted(p.relative_to(tmp_path / "again") for p in (tmp_path / "again").rglob("*") if p.is_file())
        assert first == second and first
        for rel in first:
            assert (built / "artifacts" / rel).read_bytes() == (tmp_path / "again" / rel).read_bytes(), rel

    def test_missing_run_file_fails_before_work(self, built, tmp_path):
        code, _, err = run("build", *cfg(built, "--runs", "nope.run", "--artifacts", tmp_path / "a"))
        assert code == 1 and err.startswith("error: config:") and "nope.run" in err
        assert len(err.strip().splitlines()) == 1
        assert not (tmp_path / "a").exists()


class TestSearch:
    def test_exact_self_first(self, built):
        for kind in ("vertex", "hybrid", "kernel"):
            code, out, err = run("search", *cfg(built, "--query", "d03", "--kind", kind, "--exact"))
            assert code == 0, err
            rows = parse_run_lines(out.splitlines())
            (rank,) = rows.values()
            assert rank[0][1] == "d03"

    def test_ann_overlaps_exact(self, built):
        for q in ("d00", "d05", "d11"):
            _, exact, _ = run("search", *cfg(built, "--query", q, "--exact", "--k", 10))
            _, ann, _ = run("search", *cfg(built, "--query", q, "--k", 10))
            a = {line.split()[2] for line in exact.splitlines()}
            b = {line.split()[2] for line in ann.splitlines()}
            assert len(a & b) / 10 >= 0.9

    def test_k_beyond_collection(self, built):
        code, out, _ = run("search", *cfg(built, "--query", "d00", "--k", 500, "--exact"))
        assert code == 0 and len(out.splitlines()) == 12

    def test_output_is_reingestable(self, built):
        _, out, _ = run("search", *cfg(built, "--query", "d02"))
        rows = next(iter(parse_run_lines(out.splitlines()).values()))
        assert [r[0] for r in rows] == list(range(1, len(rows) + 1))

    def test_unknown_query(self, built):
        code, _, err = run("search", *cfg(built, "--query", "zz"))
        assert code == 1 and err.startswith("error: ")

    def test_stale_artifacts(self, built):
        code, _, err = run("search", *cfg(built, "--query", "d00", "--M", 8))
        assert code == 1 and err.startswith("error: artifact-mismatch:")


class TestEvaluate:
    def test_usage_error_on_empty_methods(self, built, tmp_path):
        code, _, err = run("evaluate", *cfg(built, "--methods", "", "--reports", tmp_path))
        assert code == 2 and err.startswith("error: usage:")

    def test_two_methods_winning(self, built, tmp_path):
        code, _, err = run(
            "evaluate", *cfg(built, "--methods", "single:r1,single:r3", "--repetitions", 0, "--reports", tmp_path)
        )
        assert code == 0, err
        wins = {r["method"]: int(r["wins"]) for r in read_csv(tmp_path / "winning.csv")}
        eff = {r["method"]: float(r["value"]) for r in read_csv(tmp_path / "effectiveness.csv")}
        assert eff["single:r1"] != eff["single:r3"]
        assert sorted(wins.values()) == [0, 1]
        assert wins[max(eff, key=eff.get)] == 1
        assert not (tmp_path / "timing.csv").exists()

    def test_csv_cells_match_oracle(self, built, tmp_path):
        run("evaluate", *cfg(built, "--methods", "single:r2", "--repetitions", 0, "--reports", tmp_path))
        store = load_rank_store(built / "manifest.ini", sorted(built.glob("*.run")))
        qrels = read_qrels(built / "qrels.txt")
        rows = read_csv(tmp_path / "per_query.csv")
        assert len(rows) == 12
        for row in rows:
            assert float(row["value"]) == pytest.approx(ndcg_at_k(store.rank("r2", row["query"]), qrels, 10), abs=1e-11)
        (eff,) = read_csv(tmp_path / "effectiveness.csv")
        assert (eff["dataset"], eff["config"], eff["metric"]) == ("synth", "all", "ndcg@10")
        assert float(eff["value"]) == pytest.approx(sum(float(r["value"]) for r in rows) / 12, abs=1e-11)

    def test_timing_report(self, built, tmp_path):
        code, _, _ = run("evaluate", *cfg(built, "--methods", "fv-v,rrf", "--repetitions", 1, "--reports", tmp_path))
        assert code == 0
        rows = read_csv(tmp_path / "timing.csv")
        assert {(r["method"], r["stage"]) for r in rows} >= {("fv-v", "total"), ("rrf", "retrieval")}

    def test_deterministic_reports(self, built, tmp_path):
        for sub in ("a", "b"):
            code, _, err = run("evaluate", *cfg(built, "--repetitions", 0, "--threads", 2, "--reports", tmp_path / sub))
            assert code == 0, err
        for name in ("effectiveness.csv", "winning.csv", "per_query.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestMisc:
    def test_bad_subcommand(self):
        code, _, err = run("frobnicate")
        assert code == 2 and err.startswith("error: usage:")

    def test_dump_graph(self, built):
        code, out, _ = run("dump-graph", *cfg(built, "--query", "d00"))
        assert code == 0 and any(line.startswith("v d00 ") for line in out.splitlines())

    def test_dump_vector(self, built):
        code, out, _ = run("dump-vector", *cfg(built, "--query", "d00", "--kind", "kernel"))
        assert code == 0 and out.strip()

    def test_bench_small(self):
        code, out, err = run("bench", "--n", 300, "--queries", 10, "--dimension", 500, "--nnz", 10, "--ef-search", "10,50")
        assert code == 0, err
        lines = out.splitlines()
        assert lines[0].startswith("n,ef_search,recall@10") and len(lines) == 3
