import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stix.core import Bitmap, pack_mask, pack_masks
from stix.textindex import bitmap_match, build_inverted_file, hamming, if_candidates, match_rows

PIZZA, BAR, UNSEEN = 0, 1, 2


def bm(s: str) -> Bitmap:
    """Bitmap from a display string, bit 0 first."""
    return Bitmap.from_ids({i for i, c in enumerate(s) if c == "1"}, len(s))


class TestInvertedFile:
    def test_postings(self):
        f = build_inverted_file([1, 2], [{PIZZA}, {PIZZA, BAR}])
        assert f.postings[PIZZA].tolist() == [1, 2]
        assert f.postings[BAR].tolist() == [2]

    def test_keywordless_object_in_no_list(self):
        f = build_inverted_file([1, 2], [{PIZZA}, set()])
        assert all(2 not in p for p in f.postings.values())

    def test_empty_input(self):
        f = build_inverted_file([], [])
        assert len(f.postings) == 0

    def test_candidates_examples(self):
        f = build_inverted_file([1, 2, 5, 7], [{PIZZA}, {PIZZA, BAR}, {PIZZA}, {BAR}])
        assert if_candidates(f, {PIZZA, BAR}).tolist() == [2]
        assert if_candidates(f, {UNSEEN}).tolist() == []
        assert if_candidates(f, {PIZZA}).tolist() == [1, 2, 5]

    def test_no_keywords_returns_all_members(self):
        f = build_inverted_file([4, 9], [set(), {BAR}])
        assert sorted(if_candidates(f, set()).tolist()) == [4, 9]

    @given(
        st.lists(st.sets(st.integers(0, 6), max_size=4), max_size=30),
        st.sets(st.integers(0, 7), max_size=3),
    )
    def test_equals_brute_force(self, sets, query):
        ids = list(range(100, 100 + len(sets)))
        f = build_inverted_file(ids, sets)
        expect = [i for i, s in zip(ids, sets) if query <= s]
        assert if_candidates(f, query).tolist() == expect


class TestBitmaps:
    def test_match_examples(self):
        assert bitmap_match(bm("0110"), bm("0100"))
        assert not bitmap_match(bm("0110"), bm("1100"))
        assert bitmap_match(bm("0000"), bm("0000"))
        assert bitmap_match(bm("1011"), bm("0000"))

    def test_hamming_examples(self):
        a = bm("101010")
        assert hamming(a, a) == 0
        assert hamming(a, bm("011010")) == 2
        assert hamming(a, ~a) == 6

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hamming(bm("10"), bm("100"))
        with pytest.raises(ValueError):
            bitmap_match(bm("10"), bm("100"))

    @given(st.lists(st.sets(st.integers(0, 129)), min_size=1, max_size=20), st.sets(st.integers(0, 129), max_size=3))
    def test_packed_match_equals_subset(self, sets, query):
        masks = [Bitmap.from_ids(s, 130).bits for s in sets]
        got = match_rows(pack_masks(masks, 130), pack_mask(Bitmap.from_ids(query, 130).bits, 130))
        assert got.tolist() == [query <= s for s in sets]
        assert got.dtype == np.bool_
