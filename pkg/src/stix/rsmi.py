"""Recursive spatial model index and its spatio-textual variants.

The hierarchy is grown top-down. A node holding more than ``S`` objects is
split at the median of one axis into two equal halves. The halves are
ordered by the z-value of their rank-space centroids, and a model is
trained to map each point to its half. Objects are then reassigned to the
half the model predicts for them, and each half is grown recursively. A
node with at most ``S`` objects becomes a leaf: its objects are sorted by
z-value and cut into blocks of ``|B|``, and a leaf model with error bounds
maps points to blocks.

Three leaf attachments give the variants:

* ``if``  - inverted file per block, spatial-only pruning above (RSMI-IF)
* ``bm``  - keyword bitmap on every node and block (RSMI-BM, RSMI-BM*)
* ``ir2`` - an IR²-tree per block under a bitmap-augmented hierarchy
  (RSMI-BM-IR²)

``hamming`` partitioning picks the first split axis of every x/y split pair
by the Hamming distance between the halves' bitmaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from stix.core import Dataset, WindowQuery, pack_mask
from stix.geometry import Mbr, bits_per_axis, mbr_intersects, rank_space_map, z_order, z_order_array
from stix.mlmodel import ErrorBounds, Mlp, TrainConfig, compute_error_bounds, round_position, train
from stix.rtree import RStarTree, VisitStats, attach_node_bitmaps
from stix.textindex import InvertedFile, build_inverted_file, if_candidates, match_rows

ATTACHMENTS = ("if", "bm", "ir2")
STRATEGIES = ("spatial", "hamming")

X_AXIS, Y_AXIS = 0, 1


@dataclass(frozen=True)
class RsmiParams:
    block_size: int = 100
    partition_frac: float = 0.1
    partition_size: int | None = None  # overrides partition_frac when set
    strategy: str = "spatial"
    attachment: str = "bm"
    tree_min: int = 10
    tree_max: int = 20
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block size must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown partitioning strategy {self.strategy!r}")
        if self.attachment not in ATTACHMENTS:
            raise ValueError(f"unknown leaf attachment {self.attachment!r}")

    def max_partition(self, n: int) -> int:
        if self.partition_size is not None:
            return max(1, self.partition_size)
        return max(1, math.ceil(self.partition_frac * n - 1e-9))


class LeafBlock:
    __slots__ = ("rows", "pts", "mbr", "mask", "ifile", "tree")

    def __init__(self, rows: np.ndarray, pts: np.ndarray):
        self.rows = rows
        self.pts = pts
        self.mbr = Mbr.of_points(pts)
        self.mask: int | None = None
        self.ifile: InvertedFile | None = None
        self.tree: RStarTree | None = None

    def __len__(self) -> int:
        return len(self.rows)


class RsmiNode:
    __slots__ = ("model", "mbr", "bounds", "children", "blocks", "mask", "axis", "fallback")

    def __init__(self, model: Mlp, mbr: Mbr, bounds: ErrorBounds = ErrorBounds()):
        self.model = model
        self.mbr = mbr
        self.bounds = bounds
        self.children: list[RsmiNode] | None = None
        self.blocks: list[LeafBlock] | None = None
        self.mask: int | None = None
        self.axis: int | None = None
        # objects kept in their geometric half because the model was degenerate
        self.fallback = False

    @property
    def leaf(self) -> bool:
        return self.blocks is not None

    def positions(self) -> int:
        return len(self.blocks) if self.leaf else len(self.children)


@dataclass
class PartitionNode:
    mbr: Mbr
    rows: np.ndarray | None = None
    children: list[PartitionNode] = field(default_factory=list)
    axis: int | None = None

    @property
    def leaf(self) -> bool:
        return self.rows is not None

    def leaves(self):
        if self.leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()


# -- partitioning -----------------------------------------------------------


class _Geometry:
    """Rank-space z-values of a dataset, shared by all nodes of a build."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        n = len(dataset)
        self.ranks = rank_space_map(dataset.xy, dataset.ids)
        self.bits = bits_per_axis(n)
        self.z = z_order_array(self.ranks[:, 0], self.ranks[:, 1], self.bits)

    def median_split(self, rows: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        ds = self.dataset
        order = np.lexsort((ds.ids[rows], ds.xy[rows, axis]))
        g = (len(rows) + 1) // 2
        return rows[order[:g]], rows[order[g:]]

    def centroid_z(self, rows: np.ndarray) -> int:
        c = round_position(self.ranks[rows].mean(axis=0))
        top = (1 << self.bits) - 1
        return z_order(int(min(c[0], top)), int(min(c[1], top)), self.bits)

    def order_parts(self, parts: list[np.ndarray]) -> list[np.ndarray]:
        keys = [(self.centroid_z(p), i) for i, p in enumerate(parts)]
        return [parts[i] for _, i in sorted(keys)]

    def z_sorted(self, rows: np.ndarray) -> np.ndarray:
        return rows[np.lexsort((self.dataset.ids[rows], self.z[rows]))]


def _or_masks(masks, rows) -> int:
    acc = 0
    for r in rows.tolist():
        acc |= masks[r]
    return acc


def split_distances(dataset: Dataset, rows: np.ndarray, geometry: _Geometry | None = None) -> tuple[int, int]:
    """Hamming distance between the two halves' bitmaps for an x and a y median split."""
    geometry = geometry or _Geometry(dataset)
    masks = dataset.masks
    out = []
    for axis in (X_AXIS, Y_AXIS):
        a, b = geometry.median_split(rows, axis)
        out.append((_or_masks(masks, a) ^ _or_masks(masks, b)).bit_count())
    return out[0], out[1]


def choose_split_axis_hamming(dataset: Dataset, rows=None, geometry: _Geometry | None = None) -> int:
    """x if splitting on x separates the keyword sets more than y does, else y."""
    rows = np.arange(len(dataset)) if rows is None else np.asarray(rows, dtype=np.int64)
    if len(rows) < 2:
        raise ValueError("choosing a split axis needs at least two objects")
    hx, hy = split_distances(dataset, rows, geometry)
    return X_AXIS if hx > hy else Y_AXIS


def _next_axis(strategy: str, axis: int, chosen: bool) -> int | None:
    # spatial alternates; hamming chooses the first axis of each pair and forces the second
    if strategy == "spatial" or chosen:
        return 1 - axis
    return None


def partition(dataset: Dataset, max_size: int, strategy: str = "spatial", rows=None) -> PartitionNode:
    """Median-split tree with every leaf holding at most ``max_size`` objects."""
    if max_size < 1:
        raise ValueError("maximum partition size must be at least 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown partitioning strategy {strategy!r}")
    geo = _Geometry(dataset)
    rows = np.arange(len(dataset)) if rows is None else np.asarray(rows, dtype=np.int64)

    def grow(rows, forced):
        mbr = Mbr.of_points(dataset.xy[rows])
        if len(rows) <= max_size:
            return PartitionNode(mbr, rows=rows)
        chosen = forced is None
        axis = choose_split_axis_hamming(dataset, rows, geo) if chosen else forced
        parts = geo.order_parts(list(geo.median_split(rows, axis)))
        nxt = _next_axis(strategy, axis, chosen)
        return PartitionNode(mbr, children=[grow(p, nxt) for p in parts], axis=axis)

    return grow(rows, X_AXIS if strategy == "spatial" else None)


# -- index ------------------------------------------------------------------


class RsmiIndex:
    def __init__(self, dataset: Dataset, root: RsmiNode, params: RsmiParams, max_partition: int):
        self.dataset = dataset
        self.root = root
        self.params = params
        self.max_partition = max_partition

    @classmethod
    def build(cls, dataset: Dataset, params: RsmiParams = RsmiParams(), rows=None) -> RsmiIndex:
        if len(dataset) == 0:
            raise ValueError("cannot build an index over an empty dataset")
        rows = np.arange(len(dataset)) if rows is None else np.asarray(rows, dtype=np.int64)
        S = params.max_partition(len(rows))
        geo = _Geometry(dataset)
        xy = dataset.xy
        counter = iter(range(1 << 62))

        def config():
            return replace(params.train, seed=params.train.seed + next(counter))

        def grow(rows, forced) -> RsmiNode:
            if len(rows) <= S:
                return _make_leaf(dataset, geo.z_sorted(rows), params, config())
            chosen = forced is None
            axis = choose_split_axis_hamming(dataset, rows, geo) if chosen else forced
            parts = geo.order_parts(list(geo.median_split(rows, axis)))
            members = np.concatenate(parts)
            targets = np.repeat(np.arange(len(parts)), [len(p) for p in parts])
            frame = Mbr.of_points(xy[rows])
            model = train(xy[members], targets, len(parts), config(), frame)

            pred = np.clip(round_position(model.predict_many(xy[members])), 0, len(parts) - 1)
            assigned = [members[pred == i] for i in range(len(parts))]
            node = RsmiNode(model, frame)
            node.axis = axis
            # a child this small means the model failed to learn the split
            if min(len(a) for a in assigned) < max(1, len(rows) // 8):
                assigned = parts
                node.fallback = True
                node.bounds = compute_error_bounds(model, xy[members], targets)
            nxt = _next_axis(params.strategy, axis, chosen)
            node.children = [grow(a, nxt) for a in assigned]
            return node

        root = grow(rows, X_AXIS if params.strategy == "spatial" else None)
        index = cls(dataset, root, params, S)
        index.attach()
        return index

    def attach(self):
        """Build the leaf attachments and, for bitmap variants, node bitmaps."""
        ds = self.dataset
        att = self.params.attachment
        for leaf in self.leaves():
            for block in leaf.blocks:
                if att == "if":
                    block.ifile = build_inverted_file(block.rows, [ds.keywords[r] for r in block.rows])
                elif att == "ir2":
                    tree = RStarTree.build(ds, self.params.tree_min, self.params.tree_max, rows=block.rows)
                    block.tree = attach_node_bitmaps(tree)
        if att in ("bm", "ir2"):
            augment_bitmaps(self)

    # -- introspection --------------------------------------------------

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.leaf:
                stack.extend(node.children)

    def leaves(self):
        return (n for n in self.nodes() if n.leaf)

    def blocks(self):
        for leaf in self.leaves():
            yield from leaf.blocks

    def depth(self) -> int:
        def d(node):
            return 1 if node.leaf else 1 + max(d(c) for c in node.children)

        return d(self.root)

    def nbytes(self) -> int:
        words = 8 * ((self.dataset.vocab.size + 63) // 64)
        total = 0
        for node in self.nodes():
            total += 96 + node.model.nbytes() + (words if node.mask is not None else 0)
            if node.leaf:
                for b in node.blocks:
                    total += 64 + b.rows.nbytes + b.pts.nbytes + (words if b.mask is not None else 0)
                    if b.ifile is not None:
                        total += b.ifile.nbytes()
                    if b.tree is not None:
                        total += b.tree.nbytes()
        # rank-space coordinates and z-value kept per object
        return total + 24 * len(self.dataset)

    # -- queries --------------------------------------------------------

    def window_rows(
        self,
        query: WindowQuery,
        *,
        exhaustive_inner: bool = False,
        inner_error_margins: bool = False,
        use_bitmaps: bool = True,
        stats: VisitStats | None = None,
    ) -> np.ndarray:
        return bwq_traversal(
            self,
            query,
            exhaustive_inner=exhaustive_inner,
            inner_error_margins=inner_error_margins,
            use_bitmaps=use_bitmaps,
            stats=stats,
        )

    # -- serialisation --------------------------------------------------

    def to_dict(self) -> tuple[dict, list[Mlp]]:
        models: list[Mlp] = []

        def enc(node: RsmiNode) -> dict:
            models.append(node.model)
            d = {
                "model": len(models) - 1,
                "bounds": [node.bounds.lo, node.bounds.hi],
                "mbr": list(node.mbr),
            }
            if node.leaf:
                d["blocks"] = [[int(r) for r in b.rows] for b in node.blocks]
                if node.blocks[0].tree is not None:
                    d["trees"] = [b.tree.to_dict() for b in node.blocks]
            else:
                d["axis"] = node.axis
                d["fallback"] = node.fallback
                d["children"] = [enc(c) for c in node.children]
            return d

        params = self.params
        meta = {
            "block_size": params.block_size,
            "partition_frac": params.partition_frac,
            "partition_size": params.partition_size,
            "strategy": params.strategy,
            "attachment": params.attachment,
            "tree_min": params.tree_min,
            "tree_max": params.tree_max,
            "train": {
                "learning_rate": params.train.learning_rate,
                "epochs": params.train.epochs,
                "batch_size": params.train.batch_size,
                "max_samples": params.train.max_samples,
                "seed": params.train.seed,
                "monotone": params.train.monotone,
            },
            "max_partition": self.max_partition,
        }
        return {"params": meta, "root": enc(self.root)}, models

    @classmethod
    def from_dict(cls, dataset: Dataset, d: dict, models: list[Mlp]) -> RsmiIndex:
        meta = dict(d["params"])
        train_cfg = TrainConfig(**meta.pop("train"))
        S = meta.pop("max_partition")
        params = RsmiParams(train=train_cfg, **meta)
        xy = dataset.xy

        def dec(nd) -> RsmiNode:
            node = RsmiNode(models[nd["model"]], Mbr(*nd["mbr"]), ErrorBounds(*nd["bounds"]))
            if "blocks" in nd:
                node.blocks = []
                trees = nd.get("trees")
                for i, rows in enumerate(nd["blocks"]):
                    r = np.asarray(rows, dtype=np.int64)
                    block = LeafBlock(r, xy[r])
                    if trees is not None:
                        block.tree = RStarTree.from_dict(dataset, trees[i])
                    node.blocks.append(block)
            else:
                node.axis = nd["axis"]
                node.fallback = nd["fallback"]
                node.children = [dec(c) for c in nd["children"]]
            return node

        index = cls(dataset, dec(d["root"]), params, S)
        if params.attachment == "if":
            for block in index.blocks():
                block.ifile = build_inverted_file(block.rows, [dataset.keywords[r] for r in block.rows])
        else:
            augment_bitmaps(index)
        return index


def _make_leaf(dataset: Dataset, rows: np.ndarray, params: RsmiParams, config: TrainConfig) -> RsmiNode:
    xy = dataset.xy
    B = params.block_size
    nblocks = -(-len(rows) // B)
    targets = np.arange(len(rows)) // B
    frame = Mbr.of_points(xy[rows])
    model = train(xy[rows], targets, nblocks, config, frame)
    node = RsmiNode(model, frame, compute_error_bounds(model, xy[rows], targets))
    node.blocks = [LeafBlock(rows[i : i + B], xy[rows[i : i + B]]) for i in range(0, len(rows), B)]
    return node


def build_rsmi(dataset: Dataset, params: RsmiParams = RsmiParams(), rows=None) -> RsmiIndex:
    return RsmiIndex.build(dataset, params, rows)


def augment_bitmaps(index: RsmiIndex) -> RsmiIndex:
    """Bottom-up OR of object bitmaps into every block and node."""
    masks = index.dataset.masks

    def fill(node: RsmiNode) -> int:
        acc = 0
        if node.leaf:
            for b in node.blocks:
                b.mask = b.tree.root.mask if b.tree is not None else _or_masks(masks, b.rows)
                acc |= b.mask
        else:
            for c in node.children:
                acc |= fill(c)
        node.mask = acc
        return acc

    fill(index.root)
    return index


# -- traversal --------------------------------------------------------------


class _Context:
    __slots__ = ("query", "dataset", "qwords", "gate", "stats")

    def __init__(self, query: WindowQuery, dataset: Dataset, gate: bool, stats: VisitStats):
        self.query = query
        self.dataset = dataset
        self.qwords = pack_mask(query.mask, dataset.vocab.size)
        self.gate = gate and query.mask != 0
        self.stats = stats


def _covers(mask: int | None, qmask: int) -> bool:
    return mask is None or qmask & mask == qmask


def check_inner_if(node: RsmiNode, ctx: _Context) -> bool:
    return mbr_intersects(node.mbr, ctx.query.window)


def check_inner_bm(node: RsmiNode, ctx: _Context) -> bool:
    if not mbr_intersects(node.mbr, ctx.query.window):
        return False
    return not ctx.gate or _covers(node.mask, ctx.query.mask)


def _in_window(pts: np.ndarray, w) -> np.ndarray:
    return (pts[:, 0] >= w[0]) & (pts[:, 0] <= w[2]) & (pts[:, 1] >= w[1]) & (pts[:, 1] <= w[3])


def check_leaf_if(block: LeafBlock, ctx: _Context) -> np.ndarray:
    cands = if_candidates(block.ifile, ctx.query.keywords)
    ctx.stats.objects += len(cands)
    return cands[_in_window(ctx.dataset.xy[cands], ctx.query.window)]


def check_leaf_bm(block: LeafBlock, ctx: _Context) -> np.ndarray:
    ctx.stats.objects += len(block.rows)
    hit = _in_window(block.pts, ctx.query.window)
    if ctx.query.mask:
        hit &= match_rows(ctx.dataset.mask_words[block.rows], ctx.qwords)
    return block.rows[hit]


def check_leaf_hybrid(block: LeafBlock, ctx: _Context) -> np.ndarray:
    return block.tree.window_rows(ctx.query, use_bitmaps=ctx.gate, stats=ctx.stats)


HOOKS = {
    "if": (check_inner_if, check_leaf_if),
    "bm": (check_inner_bm, check_leaf_bm),
    "ir2": (check_inner_bm, check_leaf_hybrid),
}


def predicted_range(model: Mlp, window: Mbr) -> tuple[int, int]:
    """Rounded min and max prediction over the window's corners."""
    p = round_position(model.predict_many(window.corners()))
    return int(p.min()), int(p.max())


def bwq_traversal(
    index: RsmiIndex,
    query: WindowQuery,
    *,
    exhaustive_inner: bool = False,
    inner_error_margins: bool = False,
    use_bitmaps: bool = True,
    stats: VisitStats | None = None,
) -> np.ndarray:
    """Rows answering a window query, top-down through the model hierarchy.

    Inner nodes visit the children whose position lies in the rounded
    prediction range of the window (clipped to the node), without error
    margins unless asked or the node fell back to geometric assignment.
    Leaves widen their block range by the model's error bounds. Every
    candidate child and block is gated by the variant's checks.
    ``exhaustive_inner`` visits all children of inner nodes (test mode).
    """
    stats = stats if stats is not None else VisitStats()
    check_inner, check_leaf = HOOKS[index.params.attachment]
    ctx = _Context(query, index.dataset, use_bitmaps, stats)
    w = query.window
    out = []
    if not check_inner(index.root, ctx):
        return np.empty(0, dtype=np.int64)
    stack = [index.root]
    while stack:
        node = stack.pop()
        stats.nodes += 1
        clipped = w.clip(node.mbr)
        if node.leaf:
            lo, hi = predicted_range(node.model, clipped)
            lo = max(0, lo - node.bounds.lo)
            hi = min(len(node.blocks) - 1, hi + node.bounds.hi)
            for block in node.blocks[lo : hi + 1]:
                if not mbr_intersects(block.mbr, w):
                    continue
                if ctx.gate and not _covers(block.mask, query.mask):
                    continue
                stats.blocks += 1
                found = check_leaf(block, ctx)
                if len(found):
                    out.append(found)
            continue
        if exhaustive_inner:
            lo, hi = 0, len(node.children) - 1
        else:
            lo, hi = predicted_range(node.model, clipped)
            if inner_error_margins or node.fallback:
                lo -= node.bounds.lo
                hi += node.bounds.hi
            lo, hi = max(0, lo), min(len(node.children) - 1, hi)
        for child in node.children[lo : hi + 1]:
            if check_inner(child, ctx):
                stack.append(child)
    if not out:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(out)
