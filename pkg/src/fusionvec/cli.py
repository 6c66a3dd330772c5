"""``fusionvec`` command line: build, search, evaluate, bench, synth, dump-graph, dump-vector."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import shutil
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from fusionvec import __version__
from fusionvec.config import PipelineConfig, load_config, write_config
from fusionvec.embedding import EmbeddingKind, dumps_json
from fusionvec.errors import ArtifactMismatchError, FusionVecError, UnknownItemError, UsageError
from fusionvec.evaluation import STAGES, metric_function, read_qrels, run_protocol, winning_numbers
from fusionvec.graph import dump_graph, extract_fusion_graph
from fusionvec.index import VectorCollection, ann_search, brute_force_search, build_index
from fusionvec.index.container import atomic_write_bytes
from fusionvec.pipeline import FV_METHODS, FusionRetriever
from fusionvec.ranks import RankSet, normalize_scores
from fusionvec.store import RankStore, load_rank_store, ranks_from_raw, read_manifest, read_runs, write_run
from fusionvec.synth import synthesize_collection, synthetic_sparse_vectors

ARTIFACT_FORMAT = "fusionvec-artifacts"
ARTIFACT_VERSION = 1
BUILD_FILE = "build.json"

# flag -> dotted config key; every key is also reachable through --set
CONFIG_FLAGS = {
    "manifest": "input.manifest",
    "runs": "input.runs",
    "qrels": "input.qrels",
    "cutoff": "input.cutoff",
    "kinds": "embedding.kinds",
    "codebook_size": "embedding.codebook_size",
    "sigma": "embedding.sigma",
    "strategy": "embedding.strategy",
    "M": "index.M",
    "ef_construction": "index.ef_construction",
    "ef_search": "index.ef_search",
    "methods": "evaluate.methods",
    "metric": "evaluate.metric",
    "configs": "evaluate.configs",
    "depth": "evaluate.depth",
    "repetitions": "evaluate.repetitions",
    "dataset": "evaluate.dataset",
    "artifacts": "output.artifacts",
    "reports": "output.reports",
    "threads": "run.threads",
    "seed": "run.seed",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # one parseable line instead of the usage dump
        self.exit(2, f"error: usage: {message}\n")


def _config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", "-c", help="pipeline config file")
    g.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override any config key")
    for dest in CONFIG_FLAGS:
        flag = "--" + dest.replace("_", "-")
        g.add_argument(flag, dest=dest, default=None, metavar=dest.upper(), help=f"override {CONFIG_FLAGS[dest]}")


def _load(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for dest, key in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def _store(cfg: PipelineConfig) -> RankStore:
    return load_rank_store(cfg.manifest, cfg.runs, cfg.cutoff)


# -- artifacts ---------------------------------------------------------------


def _artifact_dir(cfg: PipelineConfig, configuration: str, kind: EmbeddingKind) -> Path:
    return cfg.artifacts / configuration / kind.value


def _check_artifacts(cfg: PipelineConfig) -> dict:
    path = cfg.artifacts / BUILD_FILE
    if not path.is_file():
        raise ArtifactMismatchError(f"no built artifacts at {cfg.artifacts}; run 'fusionvec build' first")
    meta = json.loads(path.read_text(encoding="utf-8"))
    if meta.get("format") != ARTIFACT_FORMAT or meta.get("version") != ARTIFACT_VERSION:
        raise ArtifactMismatchError(f"{path}: unsupported artifact format or version")
    if meta.get("key") != cfg.build_key():
        raise ArtifactMismatchError(f"artifacts at {cfg.artifacts} were built from other inputs or parameters; rebuild")
    return meta


def _retriever(cfg: PipelineConfig, store: RankStore, configuration: str, kind: EmbeddingKind) -> FusionRetriever:
    d = _artifact_dir(cfg, configuration, kind)
    if not d.is_dir():
        raise ArtifactMismatchError(f"no {kind.value} artifacts for configuration {configuration!r}")
    return FusionRetriever.load(d, store, cfg.index.ef_search)


def _pick(name: str | None, options: Sequence[str], what: str) -> str:
    if name is None:
        return options[0]
    if name not in options:
        raise UsageError(f"unknown {what} {name!r}; choose from {', '.join(options)}")
    return name


def cmd_build(args: argparse.Namespace) -> int:
    cfg = _load(args)
    cfg.validate()
    store = _store(cfg)
    configurations = cfg.configurations(store.rankers)
    key = cfg.build_key()
    final = cfg.artifacts
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = final.parent / f".{final.name}.tmp-{os.getpid()}"
    shutil.rmtree(tmp, ignore_errors=True)
    try:
        for name, rankers in configurations.items():
            sub = store.subset(rankers)
            for kind in cfg.kinds:
                start = time.perf_counter()
                retriever = FusionRetriever.build(sub, kind, cfg.embedding, cfg.index, cfg.threads)
                retriever.save(tmp / name / kind.value)
                print(
                    f"built {name}/{kind.value} items={len(retriever.collection)} "
                    f"dimension={retriever.space.dimension} seconds={time.perf_counter() - start:.2f}"
                )
        meta = {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "key": key,
            "configurations": {k: list(v) for k, v in configurations.items()},
            "kinds": [k.value for k in cfg.kinds],
        }
        atomic_write_bytes(tmp / BUILD_FILE, dumps_json(meta).encode("utf-8"))
        old = final.parent / f".{final.name}.old-{os.getpid()}"
        if final.exists():
            os.replace(final, old)
        os.replace(tmp, final)
        shutil.rmtree(old, ignore_errors=True)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return 0


# -- search ------------------------------------------------------------------


def _query_rank_set(path: str, store: RankStore, cfg: PipelineConfig) -> RankSet:
    """Rank set of an external query from a run file: same parsing, truncation and normalization as the store."""
    manifest = read_manifest(cfg.manifest)
    raw = ranks_from_raw(read_runs([path]), manifest.modes)
    queries = sorted({q for _, q in raw})
    if len(queries) != 1:
        raise UsageError(f"{path}: query file must hold exactly one query, found {len(queries)}")
    query = queries[0]
    missing = [r for r in store.rankers if (r, query) not in raw]
    if missing:
        raise UsageError(f"{path}: no rank for rankers {missing}")
    ranks = tuple(normalize_scores(raw[(r, query)].truncated(store.cutoff), manifest.modes[r]) for r in store.rankers)
    return RankSet(query, ranks)


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _load(args)
    cfg.validate()
    meta = _check_artifacts(cfg)
    store = _store(cfg)
    configuration = _pick(args.configuration, list(meta["configurations"]), "configuration")
    kind = EmbeddingKind(_pick(args.kind, meta["kinds"], "embedding kind"))
    retriever = _retriever(cfg, store, configuration, kind)
    query = _query_rank_set(args.query_file, retriever.store, cfg) if args.query_file else args.query
    k = args.k if args.k is not None else store.cutoff
    if k < 1:
        raise UsageError("k must be >= 1")
    rank = retriever.search(query, k, fast=not args.exact)
    write_run([rank], sys.stdout)
    return 0


# -- evaluate ----------------------------------------------------------------


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if not cfg.methods:
        raise UsageError("no evaluation methods given")
    cfg.validate(need_qrels=True)
    metric_function(cfg.metric)
    store = _store(cfg)
    configurations = cfg.configurations(store.rankers)
    try:
        for rankers in configurations.values():
            cfg.check_methods(rankers)
    except FusionVecError as exc:
        raise UsageError(str(exc)) from None
    qrels = read_qrels(cfg.qrels)
    dataset = cfg.dataset or read_manifest(cfg.manifest).name
    needs_artifacts = any(m in FV_METHODS for m in cfg.methods)
    if needs_artifacts:
        meta = _check_artifacts(cfg)
        unknown = [c for c in configurations if c not in meta["configurations"]]
        if unknown:
            raise ArtifactMismatchError(f"configurations {unknown} were not built")

    effectiveness, per_query, timing = [], [], []
    table: dict[tuple[str, str, str], float] = {}
    flagged: set[str] = set()
    for name, rankers in configurations.items():
        retrievers: dict[EmbeddingKind, FusionRetriever] = {}
        for method in cfg.methods:
            retriever = None
            if method in FV_METHODS:
                kind = FV_METHODS[method][0]
                if kind not in retrievers:
                    retrievers[kind] = _retriever(cfg, store, name, kind)
                retriever = retrievers[kind]
            res = run_protocol(
                store, method, qrels, cfg.metric, rankers, cfg.depth, retriever,
                cfg.embedding, cfg.index, cfg.repetitions, threads=cfg.threads,
            )
            table[(method, dataset, name)] = res.mean
            flagged.update(res.no_relevant)
            effectiveness.append((method, dataset, name, cfg.metric, _fmt(res.mean)))
            per_query.extend((method, name, q, _fmt(v)) for q, v in res.per_query.items())
            if res.timing is not None:
                ms = res.timing.mean_ms()
                timing.extend((method, name, stage, f"{ms[stage]:.6f}") for stage in (*STAGES, "total"))
            print(f"{name}\t{method}\t{cfg.metric}\t{_fmt(res.mean)}")
    wins = winning_numbers(table)

    reports = cfg.reports
    reports.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(reports / "effectiveness.csv", _csv_text(("method", "dataset", "config", "metric", "value"), effectiveness))
    atomic_write_bytes(reports / "per_query.csv", _csv_text(("method", "config", "query", "value"), per_query))
    atomic_write_bytes(reports / "winning.csv", _csv_text(("method", "wins"), [(m, wins[m]) for m in cfg.methods]))
    if cfg.repetitions > 0:
        atomic_write_bytes(reports / "timing.csv", _csv_text(("method", "config", "stage", "mean-ms"), timing))
    if flagged:
        print(f"warning: {len(flagged)} queries have no relevant items and score 0", file=sys.stderr)
    return 0


# -- bench -------------------------------------------------------------------


def _int_list(value: str) -> list[int]:
    try:
        out = [int(x) for x in value.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {value!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(value: str) -> list[float]:
    try:
        return [float(x) for x in value.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {value!r}") from None


def cmd_bench(args: argparse.Namespace) -> int:
    """Recall and latency of the ANN index against brute force on synthetic sparse vectors."""
    if args.n < 1 or args.queries < 1 or args.k < 1:
        raise UsageError("n, queries and k must be >= 1")
    vectors = synthetic_sparse_vectors(args.n + args.queries, args.dimension, args.nnz, args.seed)
    base, queries = vectors[: args.n], vectors[args.n :]
    coll = VectorCollection(args.dimension, tuple(f"v{i}" for i in range(args.n)), tuple(base))
    start = time.perf_counter()
    index = build_index(coll, args.M, args.ef_construction, args.seed)
    build_s = time.perf_counter() - start

    brute_force_search(queries[0], coll, args.k)
    start = time.perf_counter()
    truth = [set(brute_force_search(q, coll, args.k).items) for q in queries]
    brute_ms = 1e3 * (time.perf_counter() - start) / len(queries)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("n", "ef_search", f"recall@{args.k}", "ann_ms", "brute_ms", "speedup", "build_s"))
    for ef in args.ef_search:
        ef = max(ef, args.k)
        ann_search(index, queries[0], args.k, ef)
        start = time.perf_counter()
        found = [ann_search(index, q, args.k, ef).items for q in queries]
        ann_ms = 1e3 * (time.perf_counter() - start) / len(queries)
        recall = float(np.mean([len(truth[i] & set(f)) / len(truth[i]) for i, f in enumerate(found)]))
        w.writerow((args.n, ef, f"{recall:.4f}", f"{ann_ms:.4f}", f"{brute_ms:.4f}", f"{brute_ms / ann_ms:.2f}", f"{build_s:.2f}"))
    return 0


# -- synth -------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    if args.classes < 1 or args.per_class < 1:
        raise UsageError("classes and per-class must be >= 1")
    if not args.noise or any(s < 0 for s in args.noise):
        raise UsageError("need one non-negative noise level per ranker")
    if args.cutoff < 1:
        raise UsageError("cutoff must be >= 1")
    collection = synthesize_collection(
        args.classes, args.per_class, args.noise, args.seed, args.cutoff, args.spread, args.name
    )
    out = Path(args.out)
    paths = collection.write(out, args.depth)
    runs = [p.name for k, p in paths.items() if k.startswith("run:")]
    write_config(
        out / "config.ini",
        {
            "input": {"manifest": paths["manifest"].name, "runs": " ".join(runs), "qrels": paths["qrels"].name},
            "output": {"artifacts": "artifacts", "reports": "reports"},
        },
    )
    print(f"wrote {len(collection.items)} items, {len(runs)} rankers to {out}")
    return 0


# -- dumps -------------------------------------------------------------------


def cmd_dump_graph(args: argparse.Namespace) -> int:
    cfg = _load(args)
    cfg.validate()
    store = _store(cfg)
    configurations = cfg.configurations(store.rankers)
    name = _pick(args.configuration, list(configurations), "configuration")
    sub = store.subset(configurations[name])
    if args.query_file:
        rank_set = _query_rank_set(args.query_file, sub, cfg)
    else:
        if args.query not in sub:
            raise UnknownItemError(f"unknown query id {args.query!r}")
        rank_set = sub.rank_set(args.query)
    dump_graph(extract_fusion_graph(rank_set, sub), sys.stdout)
    return 0


def cmd_dump_vector(args: argparse.Namespace) -> int:
    cfg = _load(args)
    cfg.validate()
    meta = _check_artifacts(cfg)
    store = _store(cfg)
    configuration = _pick(args.configuration, list(meta["configurations"]), "configuration")
    kind = EmbeddingKind(_pick(args.kind, meta["kinds"], "embedding kind"))
    retriever = _retriever(cfg, store, configuration, kind)
    query = _query_rank_set(args.query_file, retriever.store, cfg) if args.query_file else args.query
    retriever.embed(retriever.graph(query)).dump(sys.stdout)
    return 0


# -- entry point -------------------------------------------------------------


def _query_args(p: argparse.ArgumentParser, kind: bool = True) -> None:
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--query", "-q", help="id of a collection item")
    q.add_argument("--query-file", help="run file holding one external query's ranks")
    p.add_argument("--configuration", help="ranker configuration name (default: the first)")
    if kind:
        p.add_argument("--kind", choices=[k.value for k in EmbeddingKind], help="embedding (default: the first built)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusionvec", description="Rank aggregation with fusion vectors and an HNSW index.")
    parser.add_argument("--version", action="version", version=f"fusionvec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="model the collection and persist spaces, codebooks and indexes")
    _config_args(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="rank the collection for one query; prints run-file lines")
    _config_args(p)
    _query_args(p)
    p.add_argument("--k", type=int, default=None, help="result length (default: the cut-off)")
    p.add_argument("--exact", action="store_true", help="brute-force search instead of the index")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="run the evaluation protocol and write CSV reports")
    _config_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="index recall/latency benchmark on synthetic sparse vectors")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--dimension", type=int, default=10_000)
    p.add_argument("--nnz", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--ef-construction", type=int, default=200)
    p.add_argument("--ef-search", type=_int_list, default=[10, 20, 40, 100], help="comma-separated list")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a planted-cluster fixture: runs, manifest, qrels, config")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--noise", type=_float_list, default=[2.0, 3.0, 4.0], help="one level per ranker, comma-separated")
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, default=20)
    p.add_argument("--depth", type=int, default=None, help="run depth written to disk (default: full)")
    p.add_argument("--name", default="synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-graph", help="print a query's fusion graph")
    _config_args(p)
    _query_args(p, kind=False)
    p.set_defaults(func=cmd_dump_graph)

    p = sub.add_parser("dump-vector", help="print a query's fusion vector as idx:value pairs")
    _config_args(p)
    _query_args(p)
    p.set_defaults(func=cmd_dump_vector)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
        sys.stdout.flush()  # surface a closed pipe here, not at interpreter exit
        return code
    except FusionVecError as exc:
        message = " ".join(str(exc).split())
        print(f"error: {exc.code}: {message}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except BrokenPipeError:  # downstream reader closed early, e.g. `| head`
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except OSError as exc:
        print(f"error: io: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
