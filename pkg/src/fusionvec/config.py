"""Pipeline configuration: sectioned ``key = value`` files with command-line overrides."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from fusionvec.embedding import DEFAULT_SIGMA, EmbeddingKind
from fusionvec.errors import ConfigError
from fusionvec.evaluation import DEFAULT_REPETITIONS
from fusionvec.pipeline import EmbeddingParams, IndexParams, check_method

DEFAULT_METHODS = ("fv-v", "fv-h", "fv-k", "fv-v-fast", "fv-h-fast", "fv-k-fast", "rrf", "borda", "combsum", "medianrank", "best-single")

# section -> key -> type; the full set of keys a config file (or --set) may use
SCHEMA: dict[str, dict[str, type]] = {
    "input": {"manifest": str, "runs": str, "qrels": str, "cutoff": int},
    "embedding": {"kinds": str, "codebook_size": int, "sigma": float, "strategy": str, "seed": int},
    "index": {"M": int, "ef_construction": int, "ef_search": int, "seed": int},
    "evaluate": {"methods": str, "metric": str, "configs": str, "depth": int, "repetitions": int, "dataset": str},
    "output": {"artifacts": str, "reports": str},
    "run": {"threads": int, "seed": int},
}


@dataclass(frozen=True)
class PipelineConfig:
    manifest: Path
    runs: tuple[Path, ...]
    qrels: Path | None = None
    cutoff: int | None = None
    kinds: tuple[EmbeddingKind, ...] = (EmbeddingKind.VERTEX, EmbeddingKind.HYBRID, EmbeddingKind.KERNEL)
    embedding: EmbeddingParams = EmbeddingParams()
    index: IndexParams = IndexParams()
    methods: tuple[str, ...] = DEFAULT_METHODS
    metric: str = "ndcg@10"
    configs: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    depth: int | None = None
    repetitions: int = DEFAULT_REPETITIONS
    dataset: str | None = None
    artifacts: Path = Path("artifacts")
    reports: Path = Path("reports")
    threads: int = 1

    def validate(self, need_qrels: bool = False) -> None:
        missing = [str(p) for p in (self.manifest, *self.runs) if not p.is_file()]
        if need_qrels and (self.qrels is None or not self.qrels.is_file()):
            missing.append(str(self.qrels) if self.qrels else "<qrels not configured>")
        if missing:
            raise ConfigError(f"missing input files: {', '.join(missing)}")
        if not self.runs:
            raise ConfigError("no run files configured")
        checks = [
            (self.cutoff is None or self.cutoff >= 1, "cutoff must be >= 1"),
            (self.index.M >= 2, "index.M must be >= 2"),
            (self.index.ef_construction >= self.index.M, "index.ef_construction must be >= index.M"),
            (self.index.ef_search >= 1, "index.ef_search must be >= 1"),
            (self.embedding.sigma > 0, "embedding.sigma must be > 0"),
            (self.embedding.codebook_size is None or self.embedding.codebook_size >= 1, "embedding.codebook_size must be >= 1"),
            (self.embedding.strategy in ("random", "medoid"), "embedding.strategy must be random or medoid"),
            (self.repetitions >= 0, "evaluate.repetitions must be >= 0"),
            (self.depth is None or self.depth >= 1, "evaluate.depth must be >= 1"),
            (self.threads >= 1, "run.threads must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def configurations(self, rankers: Sequence[str]) -> dict[str, tuple[str, ...]]:
        if not self.configs:
            return {"all": tuple(rankers)}
        for name, subset in self.configs.items():
            unknown = [r for r in subset if r not in rankers]
            if unknown:
                raise ConfigError(f"configuration {name!r} names unknown rankers {unknown}")
        return dict(self.configs)

    def check_methods(self, rankers: Sequence[str]) -> None:
        if not self.methods:
            raise ConfigError("no evaluation methods given")
        for m in self.methods:
            try:
                check_method(m, rankers)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    def build_key(self) -> str:
        """Content address of the offline stage: input bytes plus every build-time parameter."""
        h = hashlib.sha256()
        for p in (self.manifest, *self.runs):
            h.update(p.read_bytes())
            h.update(b"\x00")
        params = {
            "cutoff": self.cutoff,
            "kinds": [k.value for k in self.kinds],
            "embedding": asdict(self.embedding),
            "index": {k: v for k, v in asdict(self.index).items() if k != "ef_search"},
            "configs": {k: list(v) for k, v in sorted(self.configs.items())},
        }
        h.update(json.dumps(params, sort_keys=True).encode())
        return h.hexdigest()


def _split_list(value: str) -> list[str]:
    return [tok for tok in value.replace(",", " ").split() if tok]


def parse_configs(value: str) -> dict[str, tuple[str, ...]]:
    """``name: r1 r2; other: r1 r3`` -> ordered mapping."""
    out: dict[str, tuple[str, ...]] = {}
    for chunk in value.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(f"configuration {chunk!r} must look like 'name: ranker ranker ...'")
        name, rankers = chunk.split(":", 1)
        subset = tuple(_split_list(rankers))
        if not name.strip() or not subset:
            raise ConfigError(f"configuration {chunk!r} needs a name and at least one ranker")
        out[name.strip()] = subset
    return out


def _coerce(section: str, key: str, value: str):
    kind = SCHEMA[section][key]
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected {kind.__name__}, got {value!r}") from None


def read_raw(path: str | os.PathLike | None) -> dict[str, dict[str, str]]:
    raw: dict[str, dict[str, str]] = {}
    if path is None:
        return raw
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # type: ignore[assignment]
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {str(exc).splitlines()[0]}") from None
    for section in cp.sections():
        raw[section] = dict(cp[section])
    return raw


def load_config(
    path: str | os.PathLike | None,
    overrides: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Read ``path`` and apply ``section.key -> value`` overrides; relative paths resolve against the file."""
    raw = read_raw(path)
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        raw.setdefault(section, {})[key] = value
    for section, entries in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in entries:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
    base = Path(path).resolve().parent if path is not None else Path.cwd()

    def get(section: str, key: str, default=None):
        if key in raw.get(section, {}):
            return _coerce(section, key, raw[section][key].strip())
        return default

    def resolve(p: str | None) -> Path | None:
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else base / q

    manifest = get("input", "manifest")
    if manifest is None:
        raise ConfigError("input.manifest is required")
    global_seed = get("run", "seed")
    emb_seed = get("embedding", "seed", 0) if global_seed is None else global_seed
    idx_seed = get("index", "seed", 0) if global_seed is None else global_seed
    kinds = get("embedding", "kinds")
    try:
        kinds_t = tuple(EmbeddingKind(k) for k in _split_list(kinds)) if kinds else PipelineConfig.kinds
    except ValueError:
        raise ConfigError(f"embedding.kinds: unknown kind in {kinds!r}") from None
    methods = get("evaluate", "methods")
    return PipelineConfig(
        manifest=resolve(manifest),
        runs=tuple(resolve(r) for r in _split_list(get("input", "runs", ""))),
        qrels=resolve(get("input", "qrels")),
        cutoff=get("input", "cutoff"),
        kinds=kinds_t,
        embedding=EmbeddingParams(
            get("embedding", "codebook_size"),
            get("embedding", "sigma", DEFAULT_SIGMA),
            get("embedding", "strategy", "random"),
            emb_seed,
        ),
        index=IndexParams(
            get("index", "M", IndexParams.M),
            get("index", "ef_construction", IndexParams.ef_construction),
            get("index", "ef_search", IndexParams.ef_search),
            idx_seed,
        ),
        methods=tuple(_split_list(methods)) if methods is not None else DEFAULT_METHODS,
        metric=get("evaluate", "metric", "ndcg@10"),
        configs=parse_configs(get("evaluate", "configs", "")),
        depth=get("evaluate", "depth"),
        repetitions=get("evaluate", "repetitions", DEFAULT_REPETITIONS),
        dataset=get("evaluate", "dataset"),
        artifacts=resolve(get("output", "artifacts", "artifacts")),
        reports=resolve(get("output", "reports", "reports")),
        threads=get("run", "threads", os.cpu_count() or 1),
    )


def write_config(path: str | os.PathLike, sections: Mapping[str, Mapping[str, object]]) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # type: ignore[assignment]
    for section, entries in sections.items():
        cp[section] = {k: str(v) for k, v in entries.items()}
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def with_index(config: PipelineConfig, **changes) -> PipelineConfig:
    return replace(config, index=replace(config.index, **changes))
