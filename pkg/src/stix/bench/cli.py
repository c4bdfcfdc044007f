"""Command line entry point: ``stix gen|workload|build|query|bench``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from stix.bench.data import SyntheticSpec, generate, load_dataset, write_csv
from stix.bench.runner import BenchConfig, emit_report, run_benchmark
from stix.bench.snapshot import snapshot_load, snapshot_save
from stix.bench.workload import WorkloadParams, WorkloadQuery, generate_workload, load_workload, save_workload
from stix.core import KnnQuery, StixError, WindowQuery
from stix.geometry import Mbr
from stix.mlmodel import TrainConfig
from stix.queryengine import VARIANTS, IndexParams, build_index, execute_bkq, execute_bwq

log = logging.getLogger("stix")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _keyword_counts(text: str) -> list[int | None]:
    """Comma list of counts; ``auto`` draws 1 to 3 per query."""
    return [None if t.strip() == "auto" else int(t) for t in text.split(",") if t.strip()]


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("STIX_SEED")
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"STIX_SEED must be an integer, got {env!r}") from None


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (falls back to $STIX_SEED, then 0)")


def _add_synthetic(p):
    p.add_argument("--count", type=int, default=10_000, help="synthetic object count")
    p.add_argument("--distribution", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--vocabulary", type=int, default=200, help="synthetic keyword corpus size")
    p.add_argument("--mean-keywords", type=float, default=2.0, help="mean keywords per object")
    p.add_argument("--zipf", type=float, default=1.0, help="keyword popularity skew")


def _add_index_params(p):
    p.add_argument("--block-size", type=int, default=None, help="leaf block capacity |B|")
    p.add_argument("--min-node", type=int, default=None, help="R*-tree minimum fanout m")
    p.add_argument("--max-node", type=int, default=None, help="R*-tree maximum fanout M")
    p.add_argument("--partition-frac", type=float, default=0.1, help="max partition size as a fraction of n")
    p.add_argument("--lr", type=float, default=0.01, help="learning rate")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--inner-error-margins", action="store_true", help="widen inner-node ranges by model error")


def _index_params(a, seed: int) -> IndexParams:
    return IndexParams(
        block_size=a.block_size,
        min_node=a.min_node,
        max_node=a.max_node,
        partition_frac=a.partition_frac,
        train=TrainConfig(learning_rate=a.lr, epochs=a.epochs, seed=seed),
        inner_error_margins=a.inner_error_margins,
    )


def _synthetic_spec(a, seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        count=a.count,
        distribution=a.distribution,
        keywords=a.vocabulary,
        mean_keywords=a.mean_keywords,
        zipf=a.zipf,
        seed=seed,
    )


def cmd_gen(a) -> int:
    ids, xy, kws = generate(_synthetic_spec(a, resolve_seed(a.seed)))
    write_csv(a.out, ids, xy, kws)
    log.info("wrote %d objects to %s", len(ids), a.out)
    return 0


def cmd_workload(a) -> int:
    ds = load_dataset(a.data)
    params = WorkloadParams(
        kind=a.kind,
        count=a.count,
        window_frac=a.window_frac,
        k=a.k,
        n_keywords=_keyword_counts(a.keywords)[0] if a.keywords else None,
        seed=resolve_seed(a.seed),
    )
    save_workload(a.out, ds, generate_workload(ds, params))
    return 0


def cmd_build(a) -> int:
    ds = load_dataset(a.data)
    h = build_index(ds, a.index, _index_params(a, resolve_seed(a.seed)))
    snapshot_save(h, a.out)
    log.info("built %s over %d objects in %.2fs", a.index, len(ds), h.meta["build_seconds"])
    return 0


def _inline_query(a, h) -> WorkloadQuery:
    """Coordinates are given in the dataset's own units."""
    ds = h.dataset
    ids = ds.vocab.lookup(w.strip() for w in (a.keywords or "").split(",") if w.strip())
    if ids is None:
        return WorkloadQuery(-1, None)
    if a.window:
        c = _floats(a.window)
        if len(c) != 4:
            raise ValueError("--window takes x0,y0,x1,y1")
        return WorkloadQuery(-1, WindowQuery(Mbr(*ds.to_unit(c[:2]), *ds.to_unit(c[2:])), ids))
    c = _floats(a.point)
    if len(c) != 2:
        raise ValueError("--point takes x,y")
    return WorkloadQuery(-1, KnnQuery(ds.to_unit(c), ids, a.k))


def cmd_query(a) -> int:
    h = snapshot_load(a.index)
    if a.workload:
        queries = load_workload(a.workload, h.dataset)
    elif a.window or a.point:
        queries = [_inline_query(a, h)]
    else:
        raise ValueError("query needs --workload, --window or --point")
    out = open(a.out, "w", encoding="utf-8") if a.out else sys.stdout
    try:
        for wq in queries:
            q = wq.query
            if q is None:  # a keyword outside the vocabulary matches nothing
                rec = {"source": wq.source, "ids": []}
            elif isinstance(q, WindowQuery):
                rec = {"source": wq.source, "ids": list(execute_bwq(h, q).ids)}
            else:
                r = execute_bkq(h, q)
                rec = {"source": wq.source, "ids": list(r.ids), "distances": list(r.distances)}
            out.write(json.dumps(rec) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bench(a) -> int:
    seed = resolve_seed(a.seed)
    variants = tuple(v.strip() for v in a.index.split(",")) if a.index else VARIANTS
    config = BenchConfig(
        data=a.data,
        synthetic=_synthetic_spec(a, seed),
        variants=variants,
        params=_index_params(a, seed),
        query_kinds=tuple(q.strip() for q in a.queries_kind.split(",")),
        queries=a.queries,
        window_fracs=tuple(_floats(a.window_frac)),
        ks=tuple(_ints(a.k)),
        n_keywords=tuple(_keyword_counts(a.keywords)),
        seed=seed,
        parallel_queries=a.parallel_queries,
    )
    report = run_benchmark(config)
    emit_report(report, a.out, a.format)
    failed = [r for r in report.rows if r.get("error")]
    log.info("wrote %d rows to %s (%d with errors)", len(report.rows), a.out, len(failed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stix", description="Spatio-textual learned and traditional indices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    _add_synthetic(p)
    _add_seed(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("workload", help="draw a query workload from a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("bwq", "bkq"), default="bwq")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--window-frac", type=float, default=0.1, help="window side as a fraction of the unit square")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--keywords", default=None, help="query keyword count (default: 1 to 3)")
    _add_seed(p)
    p.set_defaults(func=cmd_workload)

    p = sub.add_parser("build", help="build an index and save a snapshot")
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True, choices=VARIANTS)
    p.add_argument("--out", required=True)
    _add_index_params(p)
    _add_seed(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer queries from a snapshot")
    p.add_argument("--index", required=True, help="snapshot path")
    p.add_argument("--workload", default=None, help="workload file from the workload command")
    p.add_argument("--window", default=None, help="x0,y0,x1,y1 in dataset coordinates")
    p.add_argument("--point", default=None, help="x,y in dataset coordinates (kNN)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--keywords", default=None, help="comma separated query keywords")
    p.add_argument("--out", default=None, help="result file (default stdout)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="run a parameter sweep and write a report")
    p.add_argument("--data", default=None, help="CSV dataset (default: synthetic)")
    _add_synthetic(p)
    p.add_argument("--index", default=None, help=f"comma separated variants (default: all of {', '.join(VARIANTS)})")
    p.add_argument("--queries-kind", default="bwq,bkq", help="bwq, bkq or both")
    p.add_argument("--queries", type=int, default=1000, help="queries per parameter point")
    p.add_argument("--window-frac", default="0.1", help="comma list of window sides")
    p.add_argument("--k", default="10", help="comma list of k values")
    p.add_argument("--keywords", default="auto", help="comma list of query keyword counts, 'auto' for 1 to 3")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--parallel-queries", type=int, default=1, help="worker threads per workload")
    _add_index_params(p)
    _add_seed(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="stix: %(message)s")
    try:
        return a.func(a)
    except (StixError, ValueError, OSError, KeyError) as e:
        print(f"stix: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
