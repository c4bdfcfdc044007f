import numpy as np
import pytest
from conftest import DINER_WINDOW, random_dataset, random_knn_queries, random_window_queries

from stix.core import Dataset, KnnQuery, WindowQuery
from stix.geometry import Mbr, mbr_contains
from stix.oracle import oracle_bkq, oracle_bwq
from stix.rtree import (
    RStarTree,
    VisitStats,
    attach_leaf_inverted_files,
    attach_node_bitmaps,
    bkq_ir2,
    build_rstar,
    bwq,
)


def make(ds, kind, m=2, M=4):
    tree = build_rstar(ds, m, M)
    return attach_leaf_inverted_files(tree) if kind == "rstar-if" else attach_node_bitmaps(tree)


def ids_of(ds, rows):
    return sorted(ds.ids[rows].tolist())


def words(ds, *ws):
    return ds.vocab.lookup(ws)


class TestStructure:
    def test_single_object(self):
        ds = Dataset.from_records([5], np.array([[0.3, 0.7]]), [["a"]], normalize=False)
        t = build_rstar(ds, 2, 4)
        assert t.root.leaf and t.root.entries == [0]
        assert t.root.mbr == Mbr(0.3, 0.7, 0.3, 0.7)

    def test_overflow_splits_once(self):
        ds = random_dataset(0, 5, 5)
        t = build_rstar(ds, 2, 4)
        assert not t.root.leaf
        assert len(t.root.entries) == 2
        assert all(len(c.entries) >= 2 for c in t.root.entries)

    def test_fanout_bounds_on_10k(self):
        ds = random_dataset(1, 10_000, 20)
        t = build_rstar(ds, 50, 100)
        for node in t.nodes():
            if node is not t.root:
                assert 50 <= len(node.entries) <= 100
        assert sorted(r for leaf in t.leaves() for r in leaf.entries) == list(range(10_000))

    def test_mbrs_enclose_children(self):
        ds = random_dataset(2, 2000, 10)
        t = build_rstar(ds, 4, 10)
        depths = set()

        def walk(node, depth):
            if node.leaf:
                depths.add(depth)
                for r in node.entries:
                    assert mbr_contains(node.mbr, Mbr.of_point(ds.xy[r]))
                return
            for c in node.entries:
                assert mbr_contains(node.mbr, c.mbr)
                walk(c, depth + 1)

        walk(t.root, 1)
        assert depths == {t.height()}

    def test_invalid_fanout(self):
        ds = random_dataset(0, 10, 5)
        with pytest.raises(ValueError):
            RStarTree(ds, 3, 4)
        with pytest.raises(ValueError):
            RStarTree(ds, 0, 4)

    def test_node_bitmaps_are_unions(self):
        ds = random_dataset(3, 500, 15)
        t = make(ds, "ir2")

        def walk(node):
            if node.leaf:
                acc = 0
                for r in node.entries:
                    acc |= ds.masks[r]
            else:
                acc = 0
                for c in node.entries:
                    acc |= walk(c)
            assert node.mask == acc
            return acc

        walk(t.root)


class TestWindowQueries:
    @pytest.mark.parametrize("kind", ["rstar-if", "ir2"])
    def test_diner_example(self, diner, kind):
        t = make(diner, kind)
        q = WindowQuery(DINER_WINDOW, words(diner, "pizza", "bar"))
        assert ids_of(diner, bwq(t, q)) == [2]

    @pytest.mark.parametrize("kind", ["rstar-if", "ir2"])
    def test_whole_space_no_keywords(self, diner, kind):
        t = make(diner, kind)
        assert ids_of(diner, bwq(t, WindowQuery(Mbr(0, 0, 1, 1)))) == list(range(1, 11))

    @pytest.mark.parametrize("kind", ["rstar-if", "ir2"])
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_oracle(self, kind, seed):
        ds = random_dataset(seed, 1000, 25)
        t = make(ds, kind, 4, 10)
        rng = np.random.default_rng(seed)
        for q in random_window_queries(ds, rng, 100):
            assert tuple(ids_of(ds, bwq(t, q))) == oracle_bwq(ds, q).ids

    def test_disabling_bitmaps_never_visits_fewer_nodes(self):
        ds = random_dataset(4, 2000, 30)
        t = make(ds, "ir2", 4, 10)
        rng = np.random.default_rng(4)
        for q in random_window_queries(ds, rng, 50):
            on, off = VisitStats(), VisitStats()
            a = bwq(t, q, use_bitmaps=True, stats=on)
            b = bwq(t, q, use_bitmaps=False, stats=off)
            assert ids_of(ds, a) == ids_of(ds, b)
            assert off.nodes >= on.nodes


class TestKnn:
    def test_diner_example(self, diner):
        t = make(diner, "ir2")
        found = bkq_ir2(t, KnnQuery((0.42, 0.45), words(diner, "pizza", "bar"), 1))
        assert [diner.ids[r] for _, _, r in found] == [2]

    def test_k_exceeds_matches(self, diner):
        t = make(diner, "ir2")
        found = bkq_ir2(t, KnnQuery((0.0, 0.0), words(diner, "wine"), 10))
        assert [i for _, i, _ in found] == [8, 5]
        assert [d for d, _, _ in found] == sorted(d for d, _, _ in found)

    def test_unsatisfiable(self, diner):
        t = make(diner, "ir2")
        q = KnnQuery((0.5, 0.5), words(diner, "wine", "cafe"), 3)
        assert bkq_ir2(t, q) == []

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_oracle(self, seed):
        ds = random_dataset(seed + 10, 1500, 20)
        t = make(ds, "ir2", 4, 10)
        rng = np.random.default_rng(seed)
        for q in random_knn_queries(ds, rng, 100):
            found = bkq_ir2(t, q)
            exact = oracle_bkq(ds, q)
            assert tuple(i for _, i, _ in found) == exact.ids
            assert tuple(d for d, _, _ in found) == exact.distances

    def test_ties_break_by_id(self):
        pts = np.array([[0.5, 0.6], [0.5, 0.4], [0.6, 0.5], [0.4, 0.5], [0.9, 0.9]])
        ds = Dataset.from_records([40, 10, 30, 20, 50], pts, [["a"]] * 5, normalize=False)
        t = make(ds, "ir2")
        found = bkq_ir2(t, KnnQuery((0.5, 0.5), frozenset({0}), 3))
        assert [i for _, i, _ in found] == [10, 20, 30]


class TestSerialisation:
    @pytest.mark.parametrize("kind", ["rstar-if", "ir2"])
    def test_roundtrip(self, kind):
        ds = random_dataset(5, 800, 12)
        t = make(ds, kind, 4, 10)
        back = RStarTree.from_dict(ds, t.to_dict())
        assert back.kind == kind
        rng = np.random.default_rng(0)
        for q in random_window_queries(ds, rng, 40):
            assert ids_of(ds, bwq(back, q)) == ids_of(ds, bwq(t, q))
