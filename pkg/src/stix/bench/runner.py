"""Parameter sweeps over index variants, scored against brute force."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from stix.bench.data import SyntheticSpec, load_dataset, synthetic_dataset
from stix.bench.workload import WorkloadParams, generate_workload
from stix.core import Dataset
from stix.oracle import knn_deviation, oracle_bkq, oracle_bwq, precision_violations, recall
from stix.queryengine import VARIANTS, IndexParams, build_index, execute_bkq, execute_bwq
from stix.rtree import VisitStats

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# full query parameter ranges; the sweep defaults use only the middle value
WINDOW_FRACS = (0.01, 0.05, 0.1, 0.15, 0.2)
KS = (5, 10, 20, 50, 100)
KEYWORD_COUNTS = (1, 2, 3, 4, 5)

COLUMNS = (
    "schema",
    "variant",
    "query",
    "window_frac",
    "k",
    "n_keywords",
    "queries",
    "build_seconds",
    "index_bytes",
    "mean_latency_ms",
    "median_latency_ms",
    "recall",
    "deviation_pct",
    "precision_violations",
    "nodes_per_query",
    "blocks_per_query",
    "objects_per_query",
    "error",
)


@dataclass(frozen=True)
class BenchConfig:
    """``data`` is a CSV path; without it a synthetic dataset is generated.

    ``n_keywords`` entries of None draw 1 to 3 query keywords per query.
    """

    data: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    variants: tuple[str, ...] = VARIANTS
    params: IndexParams = field(default_factory=IndexParams)
    query_kinds: tuple[str, ...] = ("bwq", "bkq")
    queries: int = 1000
    window_fracs: tuple[float, ...] = (0.1,)
    ks: tuple[int, ...] = (10,)
    n_keywords: tuple[int | None, ...] = (None,)
    seed: int = 0
    parallel_queries: int = 1

    def __post_init__(self):
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ValueError(f"unknown variants {bad}")
        bad = [q for q in self.query_kinds if q not in ("bwq", "bkq")]
        if bad:
            raise ValueError(f"unknown query kinds {bad}")
        if self.parallel_queries < 1:
            raise ValueError("parallel_queries must be at least 1")

    def points(self) -> list[tuple[str, float | None, int | None, int | None]]:
        """(kind, window_frac, k, n_keywords) for every parameter point."""
        pts = []
        for kind in self.query_kinds:
            sizes = self.window_fracs if kind == "bwq" else self.ks
            for size, t in itertools.product(sizes, self.n_keywords):
                pts.append((kind, size, None, t) if kind == "bwq" else (kind, None, size, t))
        return pts


@dataclass
class BenchReport:
    rows: list[dict]
    config: dict


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def _run_queries(fn, queries, workers: int):
    """Results and per-query latencies, in workload order."""

    def one(q):
        st = VisitStats()
        t0 = time.perf_counter()
        res = fn(q, st)
        return res, time.perf_counter() - t0, st

    if workers == 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, queries))


def _score(handle, point, workload, exact, workers) -> dict:
    kind = point[0]
    queries = [w.query for w in workload]
    if kind == "bwq":
        fn = lambda q, st: execute_bwq(handle, q, stats=st)  # noqa: E731
    else:
        fn = lambda q, st: execute_bkq(handle, q, stats=st)  # noqa: E731
    _run_queries(fn, queries, workers)  # warm-up
    runs = _run_queries(fn, queries, workers)
    total = VisitStats()
    lat, recs, devs, bad = [], [], [], 0
    for (res, dt, st), q, ex in zip(runs, queries, exact):
        total.add(st)
        lat.append(dt)
        recs.append(recall(res, ex))
        if kind == "bkq":
            devs.append(knn_deviation(res, ex))
        bad += len(precision_violations(handle.dataset, res, q))
    n = max(1, len(queries))
    return {
        "mean_latency_ms": float(np.mean(lat)) * 1e3 if lat else None,
        "median_latency_ms": float(np.median(lat)) * 1e3 if lat else None,
        "recall": _mean(recs),
        "deviation_pct": _mean(devs),
        "precision_violations": bad,
        "nodes_per_query": total.nodes / n,
        "blocks_per_query": total.blocks / n,
        "objects_per_query": total.objects / n,
    }


def _dataset(config: BenchConfig) -> Dataset:
    return load_dataset(config.data) if config.data else synthetic_dataset(config.synthetic)


def run_benchmark(config: BenchConfig, dataset: Dataset | None = None) -> BenchReport:
    """One row per (variant, parameter point).

    A variant whose build fails, or a point it cannot answer, yields a row
    carrying the error message instead of aborting the sweep.
    """
    ds = dataset if dataset is not None else _dataset(config)
    points = config.points()
    workloads = {}
    for i, (kind, frac, k, t) in enumerate(points):
        wp = WorkloadParams(
            kind=kind,
            count=config.queries,
            window_frac=frac if frac is not None else 0.1,
            k=k if k is not None else 10,
            n_keywords=t,
            seed=config.seed + i,
        )
        wl = generate_workload(ds, wp)
        oracle = oracle_bwq if kind == "bwq" else oracle_bkq
        workloads[i] = (wl, [oracle(ds, w.query) for w in wl])

    rows = []
    for variant in config.variants:
        base = {"schema": SCHEMA_VERSION, "variant": variant}
        try:
            handle = build_index(ds, variant, config.params)
            base["build_seconds"] = handle.meta["build_seconds"]
            base["index_bytes"] = handle.index.nbytes()
        except Exception as e:  # reported per row, sweep continues
            log.error("building %s failed: %s", variant, e)
            handle = None
            base["error"] = f"build: {type(e).__name__}: {e}"
        for i, point in enumerate(points):
            kind, frac, k, t = point
            wl, exact = workloads[i]
            row = dict.fromkeys(COLUMNS)
            row.update(base)
            row.update(query=kind, window_frac=frac, k=k, n_keywords=t, queries=len(wl))
            if handle is not None:
                try:
                    row.update(_score(handle, point, wl, exact, config.parallel_queries))
                except Exception as e:
                    log.error("%s on %s failed: %s", variant, point, e)
                    row["error"] = f"{type(e).__name__}: {e}"
            rows.append(row)
    return BenchReport(rows, _config_dict(config, ds))


def _config_dict(config: BenchConfig, ds: Dataset) -> dict:
    d = asdict(config)
    d["objects"] = len(ds)
    d["vocabulary"] = ds.vocab.size
    return d


def emit_report(report: BenchReport, path, fmt: str = "jsonl"):
    """Write ``jsonl`` (one object per row) or ``csv`` (fixed column order)."""
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for row in report.rows:
                fh.write(json.dumps({c: row.get(c) for c in COLUMNS}) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in report.rows:
                w.writerow({c: "" if row.get(c) is None else row.get(c) for c in COLUMNS})
    else:
        raise ValueError(f"unknown report format {fmt!r}; use jsonl or csv")


__all__ = [
    "BenchConfig",
    "BenchReport",
    "COLUMNS",
    "KEYWORD_COUNTS",
    "KS",
    "SCHEMA_VERSION",
    "WINDOW_FRACS",
    "emit_report",
    "run_benchmark",
]
