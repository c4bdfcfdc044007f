"""Textual pruning primitives: inverted files and bitmap signatures."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from stix.core import Bitmap

_EMPTY = np.empty(0, dtype=np.int64)


class InvertedFile:
    """Keyword id -> ascending array of object ids (no duplicates)."""

    __slots__ = ("postings", "members")

    def __init__(self, postings: dict[int, np.ndarray], members: np.ndarray):
        self.postings = postings
        # every object covered by the file, for the empty-keyword case
        self.members = members

    def __len__(self) -> int:
        return len(self.postings)

    def nbytes(self) -> int:
        return self.members.nbytes + sum(p.nbytes + 16 for p in self.postings.values())


def build_inverted_file(ids: Sequence[int], keyword_sets: Sequence[Iterable[int]]) -> InvertedFile:
    lists: dict[int, list[int]] = {}
    for oid, kws in zip(ids, keyword_sets):
        for k in kws:
            lists.setdefault(k, []).append(int(oid))
    postings = {k: np.unique(np.asarray(v, dtype=np.int64)) for k, v in lists.items()}
    return InvertedFile(postings, np.unique(np.asarray(ids, dtype=np.int64)))


def if_candidates(f: InvertedFile, keywords: Iterable[int]) -> np.ndarray:
    """Ids listed under every keyword; all members when ``keywords`` is empty.

    Lists are intersected shortest first, probing each longer list by
    binary search.
    """
    lists = []
    for k in keywords:
        p = f.postings.get(k)
        if p is None:
            return _EMPTY
        lists.append(p)
    if not lists:
        return f.members
    lists.sort(key=len)
    out = lists[0]
    for p in lists[1:]:
        if not len(out):
            break
        pos = np.searchsorted(p, out)
        pos[pos == len(p)] = len(p) - 1
        out = out[p[pos] == out]
    return out


def bitmap_match(node_bm: Bitmap, query_bm: Bitmap) -> bool:
    """True iff every query bit is also set in the node bitmap."""
    if node_bm.length != query_bm.length:
        raise ValueError(f"bitmap lengths differ: {node_bm.length} vs {query_bm.length}")
    return query_bm.bits & node_bm.bits == query_bm.bits


def hamming(a: Bitmap, b: Bitmap) -> int:
    if a.length != b.length:
        raise ValueError(f"bitmap lengths differ: {a.length} vs {b.length}")
    return (a.bits ^ b.bits).bit_count()


def match_rows(words: np.ndarray, query_words: np.ndarray) -> np.ndarray:
    """Row mask of a packed bitmap matrix whose bits cover ``query_words``."""
    return ((words & query_words) == query_words).all(axis=1)
