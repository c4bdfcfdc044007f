import numpy as np
import pytest
from conftest import FAST, DINER_WINDOW, random_dataset, random_window_queries

from stix.core import Dataset, WindowQuery
from stix.geometry import Mbr
from stix.mlmodel import ErrorBounds, Mlp, TrainConfig, hidden_width
from stix.oracle import oracle_bwq, precision_violations
from stix.rsmi import (
    X_AXIS,
    Y_AXIS,
    RsmiIndex,
    RsmiParams,
    augment_bitmaps,
    bwq_traversal,
    choose_split_axis_hamming,
    partition,
    split_distances,
)
from stix.rtree import VisitStats


def ids(ds, rows):
    return tuple(sorted(ds.ids[rows].tolist()))


def fixture(records):
    i, p, k = zip(*records)
    return Dataset.from_records(i, np.array(p, dtype=float), k, normalize=False)


@pytest.fixture
def two_clusters():
    """Left/right halves differ in two keywords, bottom/top halves in five."""
    return fixture(
        [
            (1, (0.20, 0.20), ["a", "b", "c"]),
            (2, (0.80, 0.25), ["a", "b"]),
            (3, (0.25, 0.80), ["d", "e"]),
            (4, (0.75, 0.75), ["d"]),
        ]
    )


class TestPartition:
    def test_small_dataset_is_one_leaf(self):
        ds = random_dataset(0, 50, 5)
        root = partition(ds, 50)
        assert root.leaf and len(root.rows) == 50

    def test_default_max_size(self):
        assert RsmiParams().max_partition(100_000) == 10_000

    def test_equi_count_split(self):
        ds = random_dataset(1, 101, 5)
        root = partition(ds, 60)
        sizes = sorted(len(c.rows) for c in root.children)
        assert sizes == [50, 51]
        assert root.axis == X_AXIS

    @pytest.mark.parametrize("strategy", ["spatial", "hamming"])
    @pytest.mark.parametrize("n,S", [(1000, 100), (777, 13), (64, 1)])
    def test_leaves_bounded_and_complete(self, strategy, n, S):
        ds = random_dataset(n, n, 20)
        leaves = list(partition(ds, S, strategy).leaves())
        assert all(len(leaf.rows) <= S for leaf in leaves)
        assert sorted(np.concatenate([leaf.rows for leaf in leaves]).tolist()) == list(range(n))

    def test_spatial_axes_alternate(self):
        ds = random_dataset(2, 400, 5)
        root = partition(ds, 50)
        assert root.axis == X_AXIS
        assert all(c.axis == Y_AXIS for c in root.children)
        assert all(g.axis == X_AXIS for c in root.children for g in c.children)

    def test_hamming_splits_come_in_pairs(self, two_clusters):
        root = partition(two_clusters, 1, "hamming")
        assert root.axis == Y_AXIS
        assert all(c.axis == X_AXIS for c in root.children)


class TestHammingAxis:
    def test_two_clusters_choose_y(self, two_clusters):
        assert split_distances(two_clusters, np.arange(4)) == (2, 5)
        assert choose_split_axis_hamming(two_clusters) == Y_AXIS

    def test_wider_x_gap_chooses_x(self):
        ds = fixture(
            [
                (1, (0.2, 0.2), ["a"]),
                (2, (0.8, 0.2), ["c"]),
                (3, (0.2, 0.8), ["a", "b"]),
                (4, (0.8, 0.8), ["c"]),
            ]
        )
        assert split_distances(ds, np.arange(4)) == (3, 1)
        assert choose_split_axis_hamming(ds) == X_AXIS

    def test_tie_chooses_y(self):
        """Only a strictly larger x distance picks x first."""
        ds = fixture([(i, (0.1 * i, 0.3 * (i % 3)), ["same"]) for i in range(1, 7)])
        assert split_distances(ds, np.arange(6)) == (0, 0)
        assert choose_split_axis_hamming(ds) == Y_AXIS

    def test_needs_two_objects(self):
        ds = fixture([(1, (0.5, 0.5), ["a"])])
        with pytest.raises(ValueError):
            choose_split_axis_hamming(ds)


def quadrant_dataset():
    """Four tight clusters of 32 points, one per quadrant."""
    rng = np.random.default_rng(0)
    centres = [(0.2, 0.2), (0.8, 0.2), (0.2, 0.8), (0.8, 0.8)]
    pts = np.concatenate([np.array(c) + rng.uniform(-0.05, 0.05, (32, 2)) for c in centres])
    kws = [["k%d" % (i // 32)] for i in range(128)]
    return Dataset.from_records(np.arange(128), pts, kws, normalize=False)


class TestHierarchy:
    def test_chunking(self):
        ds = random_dataset(3, 150, 5)
        idx = RsmiIndex.build(ds, RsmiParams(block_size=100, partition_size=1000, train=FAST))
        assert idx.root.leaf
        assert [len(b) for b in idx.root.blocks] == [100, 50]

    def test_default_block_size(self):
        assert RsmiParams().block_size == 100

    def test_blocks_follow_z_order(self):
        ds = quadrant_dataset()
        idx = RsmiIndex.build(ds, RsmiParams(block_size=32, partition_size=200))
        clusters = [sorted({int(r) // 32 for r in b.rows}) for b in idx.root.blocks]
        assert clusters == [[0], [1], [2], [3]]

    def test_separable_leaf_is_exact(self):
        ds = quadrant_dataset()
        idx = RsmiIndex.build(ds, RsmiParams(block_size=32, partition_size=200, train=TrainConfig(epochs=2000)))
        assert idx.root.bounds == ErrorBounds(0, 0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            x0, x1 = np.sort(rng.random(2))
            y0, y1 = np.sort(rng.random(2))
            w = Mbr(x0, y0, x1, y1)
            st = VisitStats()
            rows = bwq_traversal(idx, WindowQuery(w), stats=st)
            touching = sum(
                1 for b in idx.root.blocks if b.mbr[0] <= x1 and x0 <= b.mbr[2] and b.mbr[1] <= y1 and y0 <= b.mbr[3]
            )
            assert st.blocks == touching
            assert ids(ds, rows) == oracle_bwq(ds, WindowQuery(w)).ids

    def test_every_object_in_one_block(self):
        ds = random_dataset(4, 3000, 20)
        idx = RsmiIndex.build(ds, RsmiParams(block_size=50, train=FAST))
        rows = np.concatenate([b.rows for b in idx.blocks()])
        assert sorted(rows.tolist()) == list(range(3000))
        assert all(len(b) <= 50 for b in idx.blocks())
        assert all(len(leaf.blocks[0].rows) and sum(map(len, leaf.blocks)) <= idx.max_partition for leaf in idx.leaves())

    def test_bitmaps_are_unions(self):
        ds = random_dataset(5, 2000, 30)
        idx = RsmiIndex.build(ds, RsmiParams(train=FAST))
        masks = ds.masks

        def walk(node):
            if node.leaf:
                acc = 0
                for b in node.blocks:
                    bm = 0
                    for r in b.rows:
                        bm |= masks[r]
                    assert b.mask == bm
                    acc |= bm
            else:
                acc = 0
                for c in node.children:
                    acc |= walk(c)
            assert node.mask == acc
            return acc

        walk(idx.root)
        before = [n.mask for n in idx.nodes()]
        augment_bitmaps(idx)
        assert [n.mask for n in idx.nodes()] == before

    def test_unknown_options(self):
        with pytest.raises(ValueError):
            RsmiParams(strategy="diagonal")
        with pytest.raises(ValueError):
            RsmiParams(attachment="btree")


def pinned_leaf(ds, position: float, bounds: ErrorBounds) -> RsmiIndex:
    """Single-leaf index with a constant model predicting ``position``."""
    idx = RsmiIndex.build(ds, RsmiParams(block_size=10, partition_size=10_000, train=FAST))
    C = len(idx.root.blocks)
    h = hidden_width(C)
    idx.root.model = Mlp(np.zeros((2, h)), np.zeros(h), np.zeros(h), position / (C - 1), C, idx.root.mbr)
    idx.root.bounds = bounds
    return idx


class TestTraversal:
    def test_diner_example(self, diner):
        for att in ("if", "bm", "ir2"):
            idx = RsmiIndex.build(diner, RsmiParams(block_size=2, partition_size=4, attachment=att, train=FAST))
            q = WindowQuery(DINER_WINDOW, diner.vocab.lookup(["pizza", "bar"]))
            assert ids(diner, bwq_traversal(idx, q, exhaustive_inner=True)) == (2,)

    def test_whole_space_single_leaf(self):
        ds = random_dataset(6, 80, 5)
        idx = RsmiIndex.build(ds, RsmiParams(block_size=10, partition_size=100, train=FAST))
        full = WindowQuery(Mbr(0, 0, 1, 1))
        assert ids(ds, bwq_traversal(idx, full)) == tuple(ds.ids.tolist())

    def test_low_error_bound_adds_one_block(self):
        ds = random_dataset(7, 60, 5)
        full = WindowQuery(Mbr(0, 0, 1, 1))
        for bounds, expected in ((ErrorBounds(0, 0), 1), (ErrorBounds(1, 0), 2), (ErrorBounds(1, 2), 4)):
            st = VisitStats()
            bwq_traversal(pinned_leaf(ds, 2.0, bounds), full, stats=st)
            assert st.blocks == expected

    @pytest.mark.parametrize("att", ["if", "bm", "ir2"])
    @pytest.mark.parametrize("strategy", ["spatial", "hamming"])
    def test_precision_and_exhaustive_recall(self, att, strategy):
        ds = random_dataset(8, 3000, 25)
        idx = RsmiIndex.build(ds, RsmiParams(block_size=50, strategy=strategy, attachment=att, train=FAST))
        rng = np.random.default_rng(8)
        for q in random_window_queries(ds, rng, 60):
            exact = set(oracle_bwq(ds, q).ids)
            got = ids(ds, bwq_traversal(idx, q))
            assert set(got) <= exact
            assert precision_violations(ds, got, q) == []
            assert set(ids(ds, bwq_traversal(idx, q, exhaustive_inner=True))) == exact

    def test_if_inner_nodes_ignore_keywords(self):
        ds = random_dataset(9, 2000, 30)
        q = WindowQuery(Mbr(0, 0, 1, 1), frozenset({ds.vocab.size - 1}))
        visits = {}
        for att in ("if", "bm"):
            idx = RsmiIndex.build(ds, RsmiParams(block_size=50, attachment=att, train=FAST))
            st = VisitStats()
            bwq_traversal(idx, q, stats=st)
            visits[att] = st.nodes
        assert visits["if"] == sum(1 for _ in idx.nodes())
        assert visits["bm"] <= visits["if"]

    def test_disabling_bitmaps_never_visits_fewer_nodes(self):
        ds = random_dataset(10, 2000, 30)
        idx = RsmiIndex.build(ds, RsmiParams(block_size=50, train=FAST))
        rng = np.random.default_rng(10)
        for q in random_window_queries(ds, rng, 50):
            on, off = VisitStats(), VisitStats()
            a = bwq_traversal(idx, q, stats=on)
            b = bwq_traversal(idx, q, use_bitmaps=False, stats=off)
            assert ids(ds, a) == ids(ds, b)
            assert off.nodes >= on.nodes and off.blocks >= on.blocks


class TestSerialisation:
    @pytest.mark.parametrize("att", ["if", "bm", "ir2"])
    def test_roundtrip(self, att):
        ds = random_dataset(11, 1500, 15)
        idx = RsmiIndex.build(ds, RsmiParams(block_size=40, attachment=att, train=FAST))
        d, models = idx.to_dict()
        back = RsmiIndex.from_dict(ds, d, models)
        assert back.params == idx.params
        rng = np.random.default_rng(11)
        for q in random_window_queries(ds, rng, 40):
            assert ids(ds, bwq_traversal(back, q)) == ids(ds, bwq_traversal(idx, q))
