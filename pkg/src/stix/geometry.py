"""Rectangles, rank space and the z-order curve."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Mbr(NamedTuple):
    """Closed axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``.

    A tuple underneath, so the R-tree code can treat it as a plain
    4-tuple in hot loops.
    """

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def from_corners(cls, lo, hi) -> Mbr:
        if lo[0] > hi[0] or lo[1] > hi[1]:
            raise ValueError(f"lower corner {tuple(lo)} exceeds upper corner {tuple(hi)}")
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @classmethod
    def of_point(cls, p) -> Mbr:
        return cls(float(p[0]), float(p[1]), float(p[0]), float(p[1]))

    @classmethod
    def of_points(cls, xy: np.ndarray) -> Mbr:
        if len(xy) == 0:
            raise ValueError("cannot bound an empty point set")
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def lo(self) -> tuple[float, float]:
        return (self.xmin, self.ymin)

    @property
    def hi(self) -> tuple[float, float]:
        return (self.xmax, self.ymax)

    def union(self, other) -> Mbr:
        return Mbr(
            min(self[0], other[0]),
            min(self[1], other[1]),
            max(self[2], other[2]),
            max(self[3], other[3]),
        )

    def area(self) -> float:
        return (self[2] - self[0]) * (self[3] - self[1])

    def clip(self, other) -> Mbr | None:
        """Intersection with ``other``, or None when they are disjoint."""
        xmin = max(self[0], other[0])
        ymin = max(self[1], other[1])
        xmax = min(self[2], other[2])
        ymax = min(self[3], other[3])
        if xmin > xmax or ymin > ymax:
            return None
        return Mbr(xmin, ymin, xmax, ymax)

    def corners(self) -> list[tuple[float, float]]:
        return [
            (self[0], self[1]),
            (self[2], self[1]),
            (self[0], self[3]),
            (self[2], self[3]),
        ]


def mbr_intersects(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def mbr_contains(outer, inner) -> bool:
    return outer[0] <= inner[0] and outer[1] <= inner[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


def point_within(p, w) -> bool:
    return w[0] <= p[0] <= w[2] and w[1] <= p[1] <= w[3]


def min_dist(p, m) -> float:
    """Euclidean distance from ``p`` to the closest point of rectangle ``m``."""
    dx = m[0] - p[0] if p[0] < m[0] else (p[0] - m[2] if p[0] > m[2] else 0.0)
    dy = m[1] - p[1] if p[1] < m[1] else (p[1] - m[3] if p[1] > m[3] else 0.0)
    return math.sqrt(dx * dx + dy * dy)


def euclidean(p, q) -> float:
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    return math.sqrt(dx * dx + dy * dy)


def rank_space_map(xy: np.ndarray, ids: np.ndarray | None = None) -> np.ndarray:
    """Per-axis ranks of every point, ties broken by object id.

    Returns an ``(n, 2)`` int64 array; each column is a permutation of
    ``0..n-1``.
    """
    xy = np.asarray(xy, dtype=np.float64)
    n = len(xy)
    if n == 0:
        raise ValueError("rank space needs at least one point")
    if ids is None:
        ids = np.arange(n)
    ranks = np.empty((n, 2), dtype=np.int64)
    for axis in (0, 1):
        order = np.lexsort((ids, xy[:, axis]))
        ranks[order, axis] = np.arange(n)
    return ranks


def bits_per_axis(n: int) -> int:
    """Smallest b with every rank in ``[0, n)`` below ``2**b`` (at least 1)."""
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def z_order(xr: int, yr: int, bits: int) -> int:
    """Interleave bits: x in even positions (x bit 0 is the LSB), y in odd."""
    limit = 1 << bits
    if not (0 <= xr < limit and 0 <= yr < limit):
        raise ValueError(f"rank ({xr}, {yr}) does not fit in {bits} bits per axis")
    z = 0
    for i in range(bits):
        z |= ((xr >> i) & 1) << (2 * i)
        z |= ((yr >> i) & 1) << (2 * i + 1)
    return z


_MASKS = (
    (16, 0x0000FFFF0000FFFF),
    (8, 0x00FF00FF00FF00FF),
    (4, 0x0F0F0F0F0F0F0F0F),
    (2, 0x3333333333333333),
    (1, 0x5555555555555555),
)


def _spread(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0xFFFFFFFF)
    for shift, mask in _MASKS:
        v = (v | (v << np.uint64(shift))) & np.uint64(mask)
    return v


def _compact(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0x5555555555555555)
    for shift, mask in (
        (1, 0x3333333333333333),
        (2, 0x0F0F0F0F0F0F0F0F),
        (4, 0x00FF00FF00FF00FF),
        (8, 0x0000FFFF0000FFFF),
        (16, 0x00000000FFFFFFFF),
    ):
        v = (v | (v >> np.uint64(shift))) & np.uint64(mask)
    return v


def z_order_array(xr, yr, bits: int) -> np.ndarray:
    """Vectorised :func:`z_order` for up to 32 bits per axis."""
    xr = np.asarray(xr, dtype=np.int64)
    yr = np.asarray(yr, dtype=np.int64)
    if bits > 32:
        raise ValueError("at most 32 bits per axis fit a 64-bit z-value")
    limit = 1 << bits
    if xr.size and (xr.min() < 0 or yr.min() < 0 or xr.max() >= limit or yr.max() >= limit):
        raise ValueError(f"ranks do not fit in {bits} bits per axis")
    return _spread(xr) | (_spread(yr) << np.uint64(1))


def z_decode_array(z) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=np.uint64)
    return _compact(z).astype(np.int64), _compact(z >> np.uint64(1)).astype(np.int64)
