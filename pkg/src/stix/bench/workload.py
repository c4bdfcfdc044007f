"""Query workloads drawn from the dataset itself."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from stix.core import Dataset, KnnQuery, WindowQuery
from stix.geometry import Mbr
from stix.queryengine import square_window

log = logging.getLogger(__name__)

# query keyword count drawn per query when not fixed
DEFAULT_KEYWORD_RANGE = (1, 3)


@dataclass(frozen=True)
class WorkloadParams:
    kind: str = "bwq"
    count: int = 1000
    window_frac: float = 0.1
    k: int = 10
    n_keywords: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("bwq", "bkq"):
            raise ValueError(f"workload kind must be bwq or bkq, got {self.kind!r}")
        if self.n_keywords is not None and self.n_keywords < 0:
            raise ValueError("keyword count cannot be negative")


@dataclass(frozen=True)
class WorkloadQuery:
    source: int  # id of the object the query was drawn from
    query: WindowQuery | KnnQuery


def generate_workload(dataset: Dataset, params: WorkloadParams) -> list[WorkloadQuery]:
    """Sample source objects and build one query around each.

    Windows are squares of side ``window_frac`` (a fraction of the unit
    square's side) centred on the source object. Query keywords are drawn
    from the source object's own keywords, so only objects carrying at least
    the requested number of keywords are eligible.
    """
    rng = np.random.default_rng(params.seed)
    lo, hi = DEFAULT_KEYWORD_RANGE
    need = params.n_keywords if params.n_keywords is not None else lo
    sizes = np.fromiter((len(k) for k in dataset.keywords), dtype=np.int64, count=len(dataset))
    eligible = np.flatnonzero(sizes >= need)
    if len(eligible) < params.count:
        log.warning("only %d objects carry >= %d keywords; workload shrinks to them", len(eligible), need)
    chosen = rng.choice(eligible, size=min(params.count, len(eligible)), replace=False) if len(eligible) else []

    out = []
    for row in chosen:
        row = int(row)
        kws = sorted(dataset.keywords[row])
        t = params.n_keywords if params.n_keywords is not None else int(rng.integers(lo, hi + 1))
        t = min(t, len(kws))
        picked = frozenset(int(k) for k in rng.choice(kws, size=t, replace=False)) if t else frozenset()
        center = (float(dataset.xy[row, 0]), float(dataset.xy[row, 1]))
        if params.kind == "bwq":
            q = WindowQuery(square_window(center, params.window_frac), picked)
        else:
            q = KnnQuery(center, picked, params.k)
        out.append(WorkloadQuery(int(dataset.ids[row]), q))
    return out


def query_to_json(dataset: Dataset, wq: WorkloadQuery) -> dict:
    q = wq.query
    words = sorted(dataset.vocab.word_of(k) for k in q.keywords)
    if isinstance(q, WindowQuery):
        return {"type": "bwq", "source": wq.source, "window": list(q.window), "keywords": words}
    return {"type": "bkq", "source": wq.source, "point": list(q.point), "k": q.k, "keywords": words}


def query_from_json(dataset: Dataset, d: dict) -> WorkloadQuery:
    """Keywords missing from the vocabulary make the query unsatisfiable (None)."""
    ids = dataset.vocab.lookup(d.get("keywords", []))
    if ids is None:
        return WorkloadQuery(d.get("source", -1), None)
    if d["type"] == "bwq":
        return WorkloadQuery(d.get("source", -1), WindowQuery(Mbr(*d["window"]), ids))
    if d["type"] == "bkq":
        return WorkloadQuery(d.get("source", -1), KnnQuery(tuple(d["point"]), ids, int(d["k"])))
    raise ValueError(f"unknown query type {d['type']!r}")


def save_workload(path, dataset: Dataset, queries: list[WorkloadQuery]):
    with open(path, "w", encoding="utf-8") as fh:
        for wq in queries:
            fh.write(json.dumps(query_to_json(dataset, wq)) + "\n")


def load_workload(path, dataset: Dataset) -> list[WorkloadQuery]:
    with open(path, encoding="utf-8") as fh:
        return [query_from_json(dataset, json.loads(line)) for line in fh if line.strip()]
