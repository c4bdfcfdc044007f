"""Brute-force ground truth and result-quality metrics."""

from __future__ import annotations

import numpy as np

from stix.core import Dataset, KnnQuery, ResultSet, WindowQuery, pack_mask
from stix.textindex import match_rows


def matching_rows(dataset: Dataset, keywords) -> np.ndarray:
    """Boolean mask of objects carrying every keyword."""
    mask = 0
    for k in keywords:
        mask |= 1 << k
    if not mask:
        return np.ones(len(dataset), dtype=bool)
    return match_rows(dataset.mask_words, pack_mask(mask, dataset.vocab.size))


def oracle_bwq(dataset: Dataset, q: WindowQuery) -> ResultSet:
    w = q.window
    xy = dataset.xy
    hit = (xy[:, 0] >= w[0]) & (xy[:, 0] <= w[2]) & (xy[:, 1] >= w[1]) & (xy[:, 1] <= w[3])
    hit &= matching_rows(dataset, q.keywords)
    return ResultSet(tuple(sorted(dataset.ids[hit].tolist())))


def oracle_bkq(dataset: Dataset, q: KnnQuery) -> ResultSet:
    rows = np.flatnonzero(matching_rows(dataset, q.keywords))
    pts = dataset.xy[rows]
    dx = pts[:, 0] - q.point[0]
    dy = pts[:, 1] - q.point[1]
    dist = np.sqrt(dx * dx + dy * dy)
    ids = dataset.ids[rows]
    order = np.lexsort((ids, dist))[: q.k]
    return ResultSet(tuple(ids[order].tolist()), tuple(dist[order].tolist()))


def recall(result, exact) -> float:
    exact = set(exact)
    if not exact:
        return 1.0
    return len(exact.intersection(result)) / len(exact)


def precision_violations(dataset: Dataset, result, q: WindowQuery | KnnQuery) -> list[int]:
    """Returned ids that fail the keyword predicate (or, for windows, lie outside)."""
    bad = []
    for oid in result:
        row = dataset.row_of[int(oid)]
        if not q.keywords <= dataset.keywords[row]:
            bad.append(oid)
            continue
        if isinstance(q, WindowQuery):
            x, y = dataset.xy[row]
            w = q.window
            if not (w[0] <= x <= w[2] and w[1] <= y <= w[3]):
                bad.append(oid)
    return bad


def knn_deviation(result: ResultSet, exact: ResultSet) -> float | None:
    """Percent by which the farthest returned neighbour exceeds the exact one of equal rank.

    None when either side is empty or the exact distance is zero while the
    returned one is not.
    """
    if not len(result) or not len(exact):
        return None
    rank = min(len(result), len(exact)) - 1
    got = result.distances[len(result) - 1]
    want = exact.distances[rank]
    if want == 0.0:
        return 0.0 if got == 0.0 else None
    return (got - want) / want * 100.0
