"""One query surface over all six index variants."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from stix.core import Dataset, KnnQuery, ResultSet, UnsupportedOperationError, WindowQuery
from stix.geometry import Mbr
from stix.mlmodel import TrainConfig
from stix.rsmi import RsmiIndex, RsmiParams
from stix.rtree import RStarTree, VisitStats, attach_leaf_inverted_files, attach_node_bitmaps

VARIANTS = ("rstar-if", "ir2", "rsmi-if", "rsmi-bm", "rsmi-bm-star", "rsmi-bm-ir2")
LEARNED = ("rsmi-if", "rsmi-bm", "rsmi-bm-star", "rsmi-bm-ir2")

# per-variant (block size |B|, min node m, max node M)
DEFAULTS = {
    "rstar-if": (None, 500, 1000),
    "ir2": (None, 50, 100),
    "rsmi-if": (1000, None, None),
    "rsmi-bm": (100, None, None),
    "rsmi-bm-star": (100, None, None),
    "rsmi-bm-ir2": (1000, 10, 20),
}

_ATTACHMENT = {"rsmi-if": "if", "rsmi-bm": "bm", "rsmi-bm-star": "bm", "rsmi-bm-ir2": "ir2"}


@dataclass(frozen=True)
class IndexParams:
    """Build parameters; None picks the variant's default."""

    block_size: int | None = None
    min_node: int | None = None
    max_node: int | None = None
    partition_frac: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)
    inner_error_margins: bool = False

    def resolved(self, variant: str) -> IndexParams:
        b, m, M = DEFAULTS[variant]
        return replace(
            self,
            block_size=self.block_size if self.block_size is not None else b,
            min_node=self.min_node if self.min_node is not None else m,
            max_node=self.max_node if self.max_node is not None else M,
        )


@dataclass
class IndexHandle:
    variant: str
    index: RStarTree | RsmiIndex
    dataset: Dataset
    params: IndexParams
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown index variant {self.variant!r}")
        kind = getattr(self.index, "kind", None)
        if self.variant in ("rstar-if", "ir2") and kind != self.variant:
            raise ValueError(f"{self.variant} handle wraps a {kind} tree")
        if self.variant in LEARNED and self.index.params.attachment != _ATTACHMENT[self.variant]:
            raise ValueError(f"{self.variant} handle wraps an index with {self.index.params.attachment} leaves")

    @property
    def learned(self) -> bool:
        return self.variant in LEARNED


def rsmi_params(variant: str, params: IndexParams) -> RsmiParams:
    p = params.resolved(variant)
    return RsmiParams(
        block_size=p.block_size,
        partition_frac=p.partition_frac,
        strategy="hamming" if variant == "rsmi-bm-star" else "spatial",
        attachment=_ATTACHMENT[variant],
        tree_min=p.min_node if p.min_node is not None else 10,
        tree_max=p.max_node if p.max_node is not None else 20,
        train=p.train,
    )


def build_index(dataset: Dataset, variant: str, params: IndexParams | None = None) -> IndexHandle:
    if variant not in VARIANTS:
        raise ValueError(f"unknown index variant {variant!r}; choose from {', '.join(VARIANTS)}")
    params = (params or IndexParams()).resolved(variant)
    t0 = time.perf_counter()
    if variant in ("rstar-if", "ir2"):
        tree = RStarTree.build(dataset, params.min_node, params.max_node)
        index = attach_leaf_inverted_files(tree) if variant == "rstar-if" else attach_node_bitmaps(tree)
    else:
        index = RsmiIndex.build(dataset, rsmi_params(variant, params))
    meta = {
        "build_seconds": time.perf_counter() - t0,
        "objects": len(dataset),
        "vocabulary": dataset.vocab.size,
        "seed": params.train.seed,
    }
    return IndexHandle(variant, index, dataset, params, meta)


def _window_rows(h: IndexHandle, q: WindowQuery, stats: VisitStats, exhaustive_inner: bool, use_bitmaps: bool):
    if h.learned:
        return h.index.window_rows(
            q,
            exhaustive_inner=exhaustive_inner,
            inner_error_margins=h.params.inner_error_margins,
            use_bitmaps=use_bitmaps,
            stats=stats,
        )
    return h.index.window_rows(q, use_bitmaps=use_bitmaps, stats=stats)


def execute_bwq(
    h: IndexHandle,
    q: WindowQuery,
    *,
    stats: VisitStats | None = None,
    exhaustive_inner: bool = False,
    use_bitmaps: bool = True,
) -> ResultSet:
    """Window query; ids ascending."""
    stats = stats if stats is not None else VisitStats()
    rows = _window_rows(h, q, stats, exhaustive_inner, use_bitmaps)
    return ResultSet(tuple(sorted(h.dataset.ids[rows].tolist())))


def initial_side(k: int, n: int) -> float:
    return math.sqrt(k / n) if n else 1.0


def square_window(center, side: float) -> Mbr | None:
    """Square of the given side centred on ``center``, clipped to the unit square.

    None when the square misses the unit square entirely.
    """
    half = side / 2.0
    x, y = center
    return Mbr(x - half, y - half, x + half, y + half).clip(Mbr(0.0, 0.0, 1.0, 1.0))


def covers_unit_square(center, side: float) -> bool:
    half = side / 2.0
    x, y = center
    return x - half <= 0.0 and y - half <= 0.0 and x + half >= 1.0 and y + half >= 1.0


def expanding_window_knn(
    h: IndexHandle,
    q: KnnQuery,
    *,
    stats: VisitStats | None = None,
    exhaustive_inner: bool = False,
) -> tuple[ResultSet, int]:
    """kNN through window queries of doubling side; returns (result, doublings).

    The first side is sqrt(k/|D|). Stops once a window holds at least k
    matches or covers the whole unit square; the k nearest matches of that
    last window are returned.
    """
    stats = stats if stats is not None else VisitStats()
    ds = h.dataset
    side = initial_side(q.k, len(ds))
    doublings = 0
    while True:
        window = square_window(q.point, side)
        if window is None:
            rows = np.empty(0, dtype=np.int64)
        else:
            rows = _window_rows(h, WindowQuery(window, q.keywords), stats, exhaustive_inner, True)
        if len(rows) >= q.k or covers_unit_square(q.point, side):
            break
        side *= 2.0
        doublings += 1
    return _nearest(ds, rows, q), doublings


def _nearest(ds: Dataset, rows: np.ndarray, q: KnnQuery) -> ResultSet:
    pts = ds.xy[rows]
    dx = pts[:, 0] - q.point[0]
    dy = pts[:, 1] - q.point[1]
    dist = np.sqrt(dx * dx + dy * dy)
    ids = ds.ids[rows]
    order = np.lexsort((ids, dist))[: q.k]
    return ResultSet(tuple(ids[order].tolist()), tuple(dist[order].tolist()))


def execute_bkq(
    h: IndexHandle,
    q: KnnQuery,
    *,
    stats: VisitStats | None = None,
    exhaustive_inner: bool = False,
    use_bitmaps: bool = True,
) -> ResultSet:
    """Boolean kNN: exact best-first on ir2, expanding windows on learned variants."""
    if h.variant == "rstar-if":
        raise UnsupportedOperationError("rstar-if does not answer Boolean kNN queries")
    if h.variant == "ir2":
        found = h.index.knn(q, use_bitmaps=use_bitmaps, stats=stats)
        return ResultSet(tuple(i for _, i, _ in found), tuple(d for d, _, _ in found))
    result, _ = expanding_window_knn(h, q, stats=stats, exhaustive_inner=exhaustive_inner)
    return result
