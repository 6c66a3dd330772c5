"""Seed-deterministic synthetic data.

``synthesize_collection`` plants class clusters and derives, per ranker, a
distance run from a noisy view of the points. ``synthetic_sparse_vectors``
builds fusion-vector-like sparse vectors: each vector puts weight on the
attributes (anchors) nearest to a latent point, so vectors that share
neighbourhoods share support, as vertex embeddings of neighbouring items do.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from fusionvec.embedding import FusionVector
from fusionvec.errors import InvalidInputError
from fusionvec.ranks import NormalizationMode, Rank
from fusionvec.store import Manifest, RankStore, build_store

CLASS_SEPARATION = 10.0
LATENT_DIM = 16


@dataclass(frozen=True)
class SyntheticCollection:
    manifest: Manifest
    labels: dict[str, str]
    # ranker -> query -> [(item, distance)] ascending, full length
    runs: dict[str, dict[str, list[tuple[str, float]]]]

    @property
    def items(self) -> tuple[str, ...]:
        return self.manifest.items

    def qrels(self) -> dict[str, set[str]]:
        by_class: dict[str, set[str]] = {}
        for item, c in self.labels.items():
            by_class.setdefault(c, set()).add(item)
        return {item: by_class[self.labels[item]] for item in self.items}

    def store(self, cutoff: int | None = None) -> RankStore:
        """The in-memory rank store (distances at full precision, unlike the written runs)."""
        m = self.manifest
        raw = {
            (r, q): Rank.from_scored(r, q, rows, higher_is_better=False)
            for r, by_query in self.runs.items()
            for q, rows in by_query.items()
        }
        return build_store(raw, m.items, m.rankers, m.modes, cutoff or m.cutoff, m.scope)

    def write(self, out_dir: str | Path, depth: int | None = None) -> dict[str, Path]:
        """Write manifest, one run file per ranker, class labels and qrels; returns their paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"manifest": out / "manifest.ini", "labels": out / "labels.txt", "qrels": out / "qrels.txt"}
        paths["manifest"].write_text(self.manifest.to_text(), encoding="utf-8")
        with open(paths["labels"], "w", encoding="utf-8") as fh:
            for item in self.items:
                fh.write(f"{item} {self.labels[item]}\n")
        qrels = self.qrels()
        with open(paths["qrels"], "w", encoding="utf-8") as fh:
            for q in self.items:
                for item in self.items:
                    if item in qrels[q]:
                        fh.write(f"{q} {item} 1\n")
        for ranker, by_query in self.runs.items():
            p = out / f"{ranker}.run"
            paths[f"run:{ranker}"] = p
            with open(p, "w", encoding="utf-8") as fh:
                for q in self.items:
                    rows = by_query[q] if depth is None else by_query[q][:depth]
                    for pos, (item, d) in enumerate(rows, start=1):
                        fh.write(f"{q} {ranker} {item} {pos} {d:.12g}\n")
        return paths


def synthesize_collection(
    classes: int,
    per_class: int,
    noise: Sequence[float],
    seed: int = 0,
    cutoff: int = 20,
    spread: float = 1.0,
    name: str = "synth",
) -> SyntheticCollection:
    """Planted clusters observed by ``len(noise)`` rankers with independent feature noise."""
    if classes < 1 or per_class < 1:
        raise InvalidInputError("need at least one class and one item per class")
    if not noise:
        raise InvalidInputError("need at least one ranker noise level")
    if any(s < 0 for s in noise):
        raise InvalidInputError("noise levels must be non-negative")
    rng = np.random.default_rng(seed)
    dim = max(LATENT_DIM, classes)
    centers = np.zeros((classes, dim))
    centers[np.arange(classes), np.arange(classes)] = CLASS_SEPARATION
    n = classes * per_class
    width = len(str(n - 1))
    items = tuple(f"d{i:0{width}d}" for i in range(n))
    classes_of = np.repeat(np.arange(classes), per_class)
    points = centers[classes_of] + spread * rng.standard_normal((n, dim))
    labels = {it: f"c{c}" for it, c in zip(items, classes_of)}

    rankers = tuple(f"r{j + 1}" for j in range(len(noise)))
    runs: dict[str, dict[str, list[tuple[str, float]]]] = {}
    for ranker, sigma in zip(rankers, noise):
        view = points + sigma * rng.standard_normal(points.shape)
        dist = cdist(view, view)
        by_query = {}
        for qi, q in enumerate(items):
            order = sorted(range(n), key=lambda j: (dist[qi, j], items[j]))
            by_query[q] = [(items[j], float(dist[qi, j])) for j in order]
        runs[ranker] = by_query
    modes = {r: NormalizationMode.MIN_MAX_INVERT for r in rankers}
    manifest = Manifest(name, items, rankers, modes, cutoff)
    return SyntheticCollection(manifest, labels, runs)


def synthetic_sparse_vectors(
    n: int,
    dimension: int = 10_000,
    nnz: int = 100,
    seed: int = 0,
    latent_dim: int = 8,
) -> list[FusionVector]:
    """``n`` sparse non-negative vectors of ``nnz`` entries each (density ``nnz/dimension``)."""
    if nnz > dimension:
        raise InvalidInputError("nnz cannot exceed the dimension")
    rng = np.random.default_rng(seed)
    anchors = rng.random((dimension, latent_dim))
    points = rng.random((n, latent_dim))
    dist, idx = cKDTree(anchors).query(points, k=nnz)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    scale = np.maximum(dist[:, -1:], 1e-12)
    weights = 1.0 - 0.9 * dist / scale  # in [0.1, 1], decreasing with distance
    out = []
    for row_idx, row_w in zip(idx, weights):
        order = np.argsort(row_idx)
        out.append(FusionVector(dimension, row_idx[order], row_w[order]))
    return out
