from __future__ import annotations

import numpy as np
import pytest

from fusionvec.cli import main
from fusionvec.errors import InvalidInputError
from fusionvec.evaluation import Qrels, run_protocol
from fusionvec.synth import synthesize_collection, synthetic_sparse_vectors


def mean_single_ndcg(noise: float, seed: int) -> float:
    coll = synthesize_collection(5, 20, [noise] * 2, seed=seed)
    store, qrels = coll.store(), Qrels(coll.qrels())
    return float(np.mean([run_protocol(store, f"single:{r}", qrels).mean for r in store.rankers]))


class TestCollection:
    def test_noise_free_rankers_are_perfect(self):
        coll = synthesize_collection(5, 20, [0.0, 0.0], seed=0)
        store, qrels = coll.store(), Qrels(coll.qrels())
        for r in store.rankers:
            assert run_protocol(store, f"single:{r}", qrels).mean == 1.0

    def test_shape(self):
        coll = synthesize_collection(3, 4, [1.0, 2.0], cutoff=5)
        assert len(coll.items) == 12 and coll.manifest.rankers == ("r1", "r2")
        assert sorted(set(coll.labels.values())) == ["c0", "c1", "c2"]
        assert all(len(rows) == 12 and rows[0][0] == q for q, rows in coll.runs["r1"].items())
        assert coll.qrels()["d00"] == {"d00", "d01", "d02", "d03"}

    def test_noise_sweep_non_increasing(self):
        seeds = range(5)
        curve = [np.mean([mean_single_ndcg(s, seed) for seed in seeds]) for s in (0.0, 2.0, 4.0, 8.0)]
        assert all(a >= b for a, b in zip(curve, curve[1:])), curve

    @pytest.mark.parametrize("args", [(0, 5, [1.0]), (2, 0, [1.0]), (2, 2, []), (2, 2, [-1.0])])
    def test_degenerate(self, args):
        with pytest.raises(InvalidInputError):
            synthesize_collection(*args)


class TestCommand:
    def test_fixed_seed_identical_files(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / sub), "--seed", "4", "--classes", "2", "--per-class", "5"]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == ["config.ini", "labels.txt", "manifest.ini", "qrels.txt", "r1.run", "r2.run", "r3.run"]
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_other_seed_differs(self, tmp_path):
        main(["synth", "--out", str(tmp_path / "a"), "--seed", "1", "--classes", "2", "--per-class", "5"])
        main(["synth", "--out", str(tmp_path / "b"), "--seed", "2", "--classes", "2", "--per-class", "5"])
        assert (tmp_path / "a" / "r1.run").read_bytes() != (tmp_path / "b" / "r1.run").read_bytes()

    def test_zero_classes_is_usage_error(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path), "--classes", "0"]) == 2
        assert capsys.readouterr().err.startswith("error: usage:")

    def test_depth_limits_written_runs(self, tmp_path):
        main(["synth", "--out", str(tmp_path), "--classes", "2", "--per-class", "5", "--depth", "3", "--cutoff", "3"])
        assert len((tmp_path / "r1.run").read_text().splitlines()) == 10 * 3


class TestSparseVectors:
    def test_density_and_determinism(self):
        a = synthetic_sparse_vectors(50, dimension=1000, nnz=10, seed=3)
        b = synthetic_sparse_vectors(50, dimension=1000, nnz=10, seed=3)
        assert all(v.nnz == 10 and v.dimension == 1000 for v in a)
        assert all(np.array_equal(x.indices, y.indices) and np.array_equal(x.values, y.values) for x, y in zip(a, b))
        assert all(np.all(np.diff(v.indices) > 0) and np.all(v.values > 0) for v in a)

    def test_nnz_bound(self):
        with pytest.raises(InvalidInputError):
            synthetic_sparse_vectors(3, dimension=5, nnz=6)
