"""Dataset ingestion (CSV) and synthetic generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stix.core import CorruptInputError, Dataset


def ingest_csv(path) -> Dataset:
    """Read ``id,x,y,kw1;kw2;...`` lines (UTF-8).

    The keyword field may be empty or missing. A first line whose id
    column reads ``id`` is taken as a header. Coordinates are normalised
    to the unit square and the vocabulary follows file order.
    """
    ids, pts, kws = [], [], []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if lineno == 1 and fields[0].strip().lower() == "id":
                continue
            if len(fields) not in (3, 4):
                raise CorruptInputError(f"{path}:{lineno}: expected id,x,y[,keywords], got {len(fields)} fields")
            try:
                oid = int(fields[0])
                x, y = float(fields[1]), float(fields[2])
            except ValueError as e:
                raise CorruptInputError(f"{path}:{lineno}: {e}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise CorruptInputError(f"{path}:{lineno}: non-finite coordinate")
            if oid < 0:
                raise CorruptInputError(f"{path}:{lineno}: negative object id {oid}")
            if oid in seen:
                raise CorruptInputError(f"{path}:{lineno}: duplicate object id {oid}")
            seen.add(oid)
            raw = fields[3] if len(fields) == 4 else ""
            words = []
            for w in raw.split(";"):
                w = w.strip()
                if w and w not in words:
                    words.append(w)
            ids.append(oid)
            pts.append((x, y))
            kws.append(words)
    return Dataset.from_records(ids, np.asarray(pts, dtype=np.float64).reshape(-1, 2), kws)


def write_csv(path, ids, xy, keyword_strings):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for oid, (x, y), words in zip(ids, xy, keyword_strings):
            out.writerow([int(oid), repr(float(x)), repr(float(y)), ";".join(words)])


def dataset_to_csv(dataset: Dataset, path):
    vocab = dataset.vocab
    b = dataset.bounds
    raw = dataset.xy * np.array([b[2] - b[0], b[3] - b[1]]) + np.array([b[0], b[1]])
    words = [[vocab.word_of(k) for k in sorted(kws)] for kws in dataset.keywords]
    write_csv(path, dataset.ids, raw, words)


@dataclass(frozen=True)
class SyntheticSpec:
    count: int = 10_000
    distribution: str = "uniform"  # or "gaussian"
    keywords: int = 200
    mean_keywords: float = 2.0
    zipf: float = 1.0
    clusters: int = 20
    seed: int = 0


def generate(spec: SyntheticSpec):
    """Points in the unit square with Zipf-popular keywords.

    Each object draws ``1 + Poisson(mean - 1)`` distinct keywords (capped at
    the vocabulary size), weighted by keyword rank ``r`` as ``1 / r**zipf``.
    Returns ``(ids, xy, keyword_strings)``.
    """
    if spec.count < 0 or spec.keywords < 1:
        raise ValueError("count must be non-negative and keywords positive")
    if spec.distribution not in ("uniform", "gaussian"):
        raise ValueError(f"unknown distribution {spec.distribution!r}")
    rng = np.random.default_rng(spec.seed)
    n = spec.count
    if spec.distribution == "uniform":
        xy = rng.random((n, 2))
    else:
        centers = rng.random((spec.clusters, 2))
        spread = rng.uniform(0.01, 0.08, size=spec.clusters)
        which = rng.integers(0, spec.clusters, size=n)
        xy = np.clip(centers[which] + rng.normal(size=(n, 2)) * spread[which, None], 0.0, 1.0)

    K = spec.keywords
    counts = np.minimum(1 + rng.poisson(max(spec.mean_keywords - 1.0, 0.0), size=n), K)
    logp = -spec.zipf * np.log(np.arange(1, K + 1))
    words = [f"kw{i}" for i in range(K)]
    kws: list[list[str]] = []
    chunk = max(1, 2_000_000 // K)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        # Gumbel top-k: a weighted draw without replacement per row
        keys = logp + rng.gumbel(size=(stop - start, K))
        order = np.argsort(-keys, axis=1)
        for row, c in zip(order, counts[start:stop]):
            kws.append([words[i] for i in row[:c]])
    ids = np.arange(n, dtype=np.int64)
    return ids, xy, kws


def synthetic_dataset(spec: SyntheticSpec) -> Dataset:
    ids, xy, kws = generate(spec)
    return Dataset.from_records(ids, xy, kws, normalize=False)


def load_dataset(path: str | Path) -> Dataset:
    return ingest_csv(path)
