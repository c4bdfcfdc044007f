"""R*-tree and its two spatio-textual extensions.

``rstar-if`` attaches an inverted file to every leaf and prunes spatially
only. ``ir2`` keeps, in every node, the bitmap of all keywords present in
its subtree (full-corpus bitmaps, hence no false positives) and prunes on
both criteria.

Trees are built by one-at-a-time insertion in dataset order using the
R* choose-subtree and split heuristics. Forced reinsertion is omitted.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from stix.core import Dataset, KnnQuery, WindowQuery, pack_mask
from stix.geometry import Mbr
from stix.textindex import InvertedFile, build_inverted_file, if_candidates, match_rows

# R* heuristic: only the best-p children by area enlargement are examined for overlap
_OVERLAP_CANDIDATES = 32


@dataclass
class VisitStats:
    nodes: int = 0
    blocks: int = 0
    objects: int = 0

    def add(self, other: VisitStats):
        self.nodes += other.nodes
        self.blocks += other.blocks
        self.objects += other.objects


class RNode:
    __slots__ = ("leaf", "entries", "rects", "rect_arr", "mask", "child_words", "ifile", "rows", "pts")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list = []  # child nodes, or dataset rows at leaves
        self.rects: list[tuple] = []
        self.rect_arr: np.ndarray | None = None
        self.mask: int | None = None
        self.child_words: np.ndarray | None = None
        self.ifile: InvertedFile | None = None
        self.rows: np.ndarray | None = None
        self.pts: np.ndarray | None = None

    @property
    def mbr(self) -> Mbr:
        return _bound(self.rects)


def _bound(rects) -> Mbr:
    a = np.asarray(rects, dtype=np.float64)
    return Mbr(float(a[:, 0].min()), float(a[:, 1].min()), float(a[:, 2].max()), float(a[:, 3].max()))


def _union(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


class RStarTree:
    """In-memory R*-tree over dataset rows.

    After :meth:`freeze` the tree is read-only and node contents are packed
    into numpy arrays for querying.
    """

    def __init__(self, dataset: Dataset, min_entries: int, max_entries: int):
        if max_entries < 2 or not 1 <= min_entries <= max_entries / 2:
            raise ValueError(f"need 1 <= m <= M/2 and M >= 2, got m={min_entries}, M={max_entries}")
        self.dataset = dataset
        self.m = min_entries
        self.M = max_entries
        self.root = RNode(leaf=True)
        self.size = 0
        self.kind = "rtree"

    # -- construction -------------------------------------------------

    @classmethod
    def build(cls, dataset: Dataset, min_entries: int, max_entries: int, rows=None) -> RStarTree:
        tree = cls(dataset, min_entries, max_entries)
        if rows is None:
            rows = range(len(dataset))
        xy = dataset.xy
        for r in rows:
            x, y = float(xy[r, 0]), float(xy[r, 1])
            tree.insert(int(r), (x, y, x, y))
        tree.freeze()
        return tree

    def insert(self, row: int, rect: tuple):
        path = []
        node = self.root
        while not node.leaf:
            i = self._choose_subtree(node, rect)
            path.append((node, i))
            node = node.entries[i]
        node.entries.append(row)
        node.rects.append(rect)
        self.size += 1

        sibling = self._split(node) if len(node.entries) > self.M else None
        for parent, i in reversed(path):
            if sibling is None:
                parent.rects[i] = _union(parent.rects[i], rect)
                continue
            parent.rects[i] = tuple(parent.entries[i].mbr)
            parent.entries.append(sibling)
            parent.rects.append(tuple(sibling.mbr))
            sibling = self._split(parent) if len(parent.entries) > self.M else None
        if sibling is not None:
            old = self.root
            self.root = RNode(leaf=False)
            self.root.entries = [old, sibling]
            self.root.rects = [tuple(old.mbr), tuple(sibling.mbr)]

    def _choose_subtree(self, node: RNode, rect) -> int:
        n = len(node.entries)
        if n == 1:
            return 0
        R = np.asarray(node.rects, dtype=np.float64)
        area = (R[:, 2] - R[:, 0]) * (R[:, 3] - R[:, 1])
        E = R.copy()
        np.minimum(E[:, :2], rect[:2], out=E[:, :2])
        np.maximum(E[:, 2:], rect[2:], out=E[:, 2:])
        enlarge = (E[:, 2] - E[:, 0]) * (E[:, 3] - E[:, 1]) - area
        if not node.entries[0].leaf:
            return int(np.lexsort((area, enlarge))[0])

        # children are leaves: minimise overlap enlargement
        cand = np.lexsort((area, enlarge))[:_OVERLAP_CANDIDATES]
        before = _overlap_sums(R[cand], R, cand)
        after = _overlap_sums(E[cand], R, cand)
        best = np.lexsort((area[cand], enlarge[cand], after - before))[0]
        return int(cand[best])

    def _split(self, node: RNode) -> RNode:
        R = np.asarray(node.rects, dtype=np.float64)
        n = len(R)
        m = self.m
        sizes = np.arange(m, n - m + 1)  # size of the first group

        best_axis, best_margin, orders = 0, math.inf, {}
        for axis in (0, 1):
            lo, hi = R[:, axis], R[:, axis + 2]
            axis_orders = [np.lexsort((hi, lo)), np.lexsort((lo, hi))]
            margin = 0.0
            for order in axis_orders:
                a, b = _group_bounds(R[order], sizes)
                margin += float(_margin(a).sum() + _margin(b).sum())
            orders[axis] = axis_orders
            if margin < best_margin:
                best_axis, best_margin = axis, margin

        best = None
        for order in orders[best_axis]:
            a, b = _group_bounds(R[order], sizes)
            overlap = _overlap(a, b)
            area = _area(a) + _area(b)
            j = int(np.lexsort((area, overlap))[0])
            key = (overlap[j], area[j])
            if best is None or key < best[0]:
                best = (key, order, int(sizes[j]))
        _, order, g = best

        entries, rects = node.entries, node.rects
        first, second = order[:g], order[g:]
        sibling = RNode(leaf=node.leaf)
        sibling.entries = [entries[i] for i in second]
        sibling.rects = [rects[i] for i in second]
        node.entries = [entries[i] for i in first]
        node.rects = [rects[i] for i in first]
        return sibling

    def freeze(self):
        """Pack node contents into arrays; call once after the last insert."""
        for node in self.nodes():
            node.rect_arr = np.asarray(node.rects, dtype=np.float64).reshape(-1, 4)
            if node.leaf:
                node.rows = np.asarray(node.entries, dtype=np.int64)
                node.pts = node.rect_arr[:, :2].copy()

    # -- introspection ------------------------------------------------

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.leaf:
                stack.extend(node.entries)

    def leaves(self):
        return (n for n in self.nodes() if n.leaf)

    def height(self) -> int:
        h, node = 1, self.root
        while not node.leaf:
            node = node.entries[0]
            h += 1
        return h

    def nbytes(self) -> int:
        total = 0
        for node in self.nodes():
            total += 64 + node.rect_arr.nbytes
            if node.leaf:
                total += node.rows.nbytes + node.pts.nbytes
            if node.child_words is not None:
                total += node.child_words.nbytes
            if node.mask is not None:
                total += 8 * ((self.dataset.vocab.size + 63) // 64)
            if node.ifile is not None:
                total += node.ifile.nbytes()
        return total

    # -- queries ------------------------------------------------------

    def window_rows(self, query: WindowQuery, *, use_bitmaps: bool = True, stats: VisitStats | None = None) -> np.ndarray:
        """Dataset rows answering ``query`` (unsorted)."""
        if self.size == 0:
            return np.empty(0, dtype=np.int64)
        stats = stats if stats is not None else VisitStats()
        w = query.window
        has_bitmaps = self.root.mask is not None
        gate = use_bitmaps and has_bitmaps
        qmask = query.mask
        if gate and qmask & self.root.mask != qmask:
            return np.empty(0, dtype=np.int64)
        if not self._rect_hits(self.root.mbr, w):
            return np.empty(0, dtype=np.int64)
        qwords = pack_mask(qmask, self.dataset.vocab.size) if has_bitmaps else None
        xy = self.dataset.xy
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            stats.nodes += 1
            if node.leaf:
                if node.ifile is not None:
                    rows = if_candidates(node.ifile, query.keywords)
                    pts = xy[rows]
                else:
                    rows, pts = node.rows, node.pts
                stats.objects += len(rows)
                hit = (pts[:, 0] >= w[0]) & (pts[:, 0] <= w[2]) & (pts[:, 1] >= w[1]) & (pts[:, 1] <= w[3])
                if node.ifile is None and qmask:
                    hit &= match_rows(self.dataset.mask_words[rows], qwords)
                out.append(rows[hit])
                continue
            R = node.rect_arr
            hit = (R[:, 0] <= w[2]) & (w[0] <= R[:, 2]) & (R[:, 1] <= w[3]) & (w[1] <= R[:, 3])
            if gate and qmask:
                hit &= match_rows(node.child_words, qwords)
            entries = node.entries
            stack.extend(entries[i] for i in np.flatnonzero(hit))
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)

    @staticmethod
    def _rect_hits(a, w) -> bool:
        return a[0] <= w[2] and w[0] <= a[2] and a[1] <= w[3] and w[1] <= a[3]

    def knn(self, query: KnnQuery, *, use_bitmaps: bool = True, stats: VisitStats | None = None) -> list[tuple[float, int, int]]:
        """Best-first search: up to k ``(distance, id, row)`` in (distance, id) order.

        Nodes are expanded before objects at equal distance, so ties resolve
        by object id exactly as a full sort would.
        """
        if self.root.mask is None:
            raise RuntimeError("best-first kNN needs node bitmaps; attach them first")
        stats = stats if stats is not None else VisitStats()
        qmask = query.mask
        if self.size == 0 or (use_bitmaps and qmask & self.root.mask != qmask):
            return []
        qwords = pack_mask(qmask, self.dataset.vocab.size)
        px, py = query.point
        ids = self.dataset.ids
        words = self.dataset.mask_words
        heap = [(0.0, 0, 0, self.root)]
        counter = 1
        found = []
        while heap and len(found) < query.k:
            d, kind, tie, item = heapq.heappop(heap)
            if kind == 1:
                found.append((d, tie, item))
                continue
            node = item
            stats.nodes += 1
            if node.leaf:
                rows = node.rows
                keep = match_rows(words[rows], qwords) if qmask else np.ones(len(rows), dtype=bool)
                stats.objects += len(rows)
                rows = rows[keep]
                pts = node.pts[keep]
                dx = pts[:, 0] - px
                dy = pts[:, 1] - py
                dist = np.sqrt(dx * dx + dy * dy)
                for dd, r in zip(dist.tolist(), rows.tolist()):
                    heapq.heappush(heap, (dd, 1, int(ids[r]), r))
                continue
            R = node.rect_arr
            gx = np.maximum(np.maximum(R[:, 0] - px, px - R[:, 2]), 0.0)
            gy = np.maximum(np.maximum(R[:, 1] - py, py - R[:, 3]), 0.0)
            dist = np.sqrt(gx * gx + gy * gy)
            keep = match_rows(node.child_words, qwords) if (use_bitmaps and qmask) else np.ones(len(R), dtype=bool)
            for i in np.flatnonzero(keep):
                heapq.heappush(heap, (float(dist[i]), 0, counter, node.entries[i]))
                counter += 1
        return found

    # -- serialisation ------------------------------------------------

    def to_dict(self) -> dict:
        """Topology only; MBRs and textual attachments are rebuilt on load."""
        def enc(node):
            if node.leaf:
                return {"rows": [int(r) for r in node.entries]}
            return {"children": [enc(c) for c in node.entries]}

        return {"m": self.m, "M": self.M, "kind": self.kind, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, dataset: Dataset, d: dict) -> RStarTree:
        tree = cls(dataset, d["m"], d["M"])
        xy = dataset.xy

        def dec(nd):
            if "rows" in nd:
                node = RNode(leaf=True)
                node.entries = list(nd["rows"])
                node.rects = [(float(xy[r, 0]), float(xy[r, 1])) * 2 for r in node.entries]
                tree.size += len(node.entries)
                return node
            node = RNode(leaf=False)
            node.entries = [dec(c) for c in nd["children"]]
            node.rects = [tuple(c.mbr) for c in node.entries]
            return node

        tree.root = dec(d["root"])
        tree.freeze()
        if d.get("kind") == "ir2":
            attach_node_bitmaps(tree)
        elif d.get("kind") == "rstar-if":
            attach_leaf_inverted_files(tree)
        return tree


def _group_bounds(R: np.ndarray, sizes: np.ndarray):
    """MBRs of R[:g] and R[g:] for each split point g in ``sizes``."""
    pre = np.empty_like(R)
    pre[:, :2] = np.minimum.accumulate(R[:, :2])
    pre[:, 2:] = np.maximum.accumulate(R[:, 2:])
    suf = np.empty_like(R)
    suf[:, :2] = np.minimum.accumulate(R[::-1, :2])[::-1]
    suf[:, 2:] = np.maximum.accumulate(R[::-1, 2:])[::-1]
    return pre[sizes - 1], suf[sizes]


def _margin(B):
    return (B[:, 2] - B[:, 0]) + (B[:, 3] - B[:, 1])


def _area(B):
    return (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])


def _overlap(A, B):
    w = np.minimum(A[:, 2], B[:, 2]) - np.maximum(A[:, 0], B[:, 0])
    h = np.minimum(A[:, 3], B[:, 3]) - np.maximum(A[:, 1], B[:, 1])
    return np.clip(w, 0, None) * np.clip(h, 0, None)


def _overlap_sums(C, R, cand):
    """For each rect in C, total overlap with every rect of R except its own slot."""
    w = np.minimum(C[:, None, 2], R[None, :, 2]) - np.maximum(C[:, None, 0], R[None, :, 0])
    h = np.minimum(C[:, None, 3], R[None, :, 3]) - np.maximum(C[:, None, 1], R[None, :, 1])
    ov = np.clip(w, 0, None) * np.clip(h, 0, None)
    ov[np.arange(len(cand)), cand] = 0.0
    return ov.sum(axis=1)


def build_rstar(dataset: Dataset, min_entries: int, max_entries: int, rows=None) -> RStarTree:
    return RStarTree.build(dataset, min_entries, max_entries, rows)


def attach_leaf_inverted_files(tree: RStarTree) -> RStarTree:
    """Turn a plain R*-tree into an R*-tree-IF (in place)."""
    kws = tree.dataset.keywords
    for leaf in tree.leaves():
        leaf.ifile = build_inverted_file(leaf.rows, [kws[r] for r in leaf.rows])
    tree.kind = "rstar-if"
    return tree


def attach_node_bitmaps(tree: RStarTree) -> RStarTree:
    """Turn a plain R*-tree into an IR²-tree (in place): bottom-up OR of bitmaps."""
    masks = tree.dataset.masks
    length = tree.dataset.vocab.size

    def fill(node: RNode) -> int:
        if node.leaf:
            acc = 0
            for r in node.entries:
                acc |= masks[r]
        else:
            child = [fill(c) for c in node.entries]
            node.child_words = np.stack([pack_mask(cm, length) for cm in child])
            acc = 0
            for cm in child:
                acc |= cm
        node.mask = acc
        return acc

    fill(tree.root)
    tree.kind = "ir2"
    return tree


def bwq(tree: RStarTree, query: WindowQuery, **kw) -> np.ndarray:
    return tree.window_rows(query, **kw)


def bkq_ir2(tree: RStarTree, query: KnnQuery, **kw):
    return tree.knn(query, **kw)
