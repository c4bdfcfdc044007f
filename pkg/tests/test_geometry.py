import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stix.geometry import (
    Mbr,
    bits_per_axis,
    mbr_intersects,
    min_dist,
    point_within,
    rank_space_map,
    z_decode_array,
    z_order,
    z_order_array,
)


def interleave_oracle(xr: int, yr: int, bits: int) -> int:
    """Bit interleaving through binary strings: x in even positions."""
    xs = format(xr, f"0{bits}b")
    ys = format(yr, f"0{bits}b")
    return int("".join(y + x for x, y in zip(xs, ys)), 2)


coord = st.floats(-10, 10, allow_nan=False)


@st.composite
def rects(draw):
    x0, x1 = sorted((draw(coord), draw(coord)))
    y0, y1 = sorted((draw(coord), draw(coord)))
    return Mbr(x0, y0, x1, y1)


class TestMbr:
    def test_intersects_examples(self):
        unit = Mbr(0, 0, 1, 1)
        assert mbr_intersects(unit, unit)
        assert not mbr_intersects(unit, Mbr(2, 2, 3, 3))
        assert mbr_intersects(unit, Mbr(1, 1, 2, 2))

    def test_point_within_examples(self):
        unit = Mbr(0, 0, 1, 1)
        assert point_within((0.5, 0.5), unit)
        assert point_within((1.0, 0.3), unit)
        assert not point_within((1.1, 0.5), unit)

    def test_min_dist_examples(self):
        unit = Mbr(0, 0, 1, 1)
        assert min_dist((0.5, 0.5), unit) == 0
        assert min_dist((2, 0), unit) == 1
        assert min_dist((2, 2), unit) == pytest.approx(math.sqrt(2))

    @given(rects(), rects())
    def test_intersects_symmetric(self, a, b):
        assert mbr_intersects(a, b) == mbr_intersects(b, a)

    @given(rects(), rects())
    def test_clip_agrees_with_intersects(self, a, b):
        c = a.clip(b)
        assert (c is not None) == mbr_intersects(a, b)
        if c is not None:
            assert c.area() <= min(a.area(), b.area()) + 1e-12

    @given(rects(), coord, coord)
    def test_min_dist_lower_bounds_sampled_points(self, m, px, py):
        d = min_dist((px, py), m)
        rng = np.random.default_rng(0)
        u = rng.random((50, 2))
        pts = np.column_stack([m[0] + u[:, 0] * (m[2] - m[0]), m[1] + u[:, 1] * (m[3] - m[1])])
        assert d <= np.hypot(pts[:, 0] - px, pts[:, 1] - py).min() + 1e-9
        assert (d == 0) == point_within((px, py), m)

    def test_of_points_and_union(self):
        m = Mbr.of_points(np.array([[0.2, 0.9], [0.5, 0.1]]))
        assert m == Mbr(0.2, 0.1, 0.5, 0.9)
        assert m.union(Mbr(0, 0, 0.1, 0.1)) == Mbr(0, 0, 0.5, 0.9)


class TestRankSpace:
    def test_sort_order(self):
        r = rank_space_map(np.array([[0.5, 0.0], [0.1, 0.0], [0.9, 0.0]]))
        assert r[:, 0].tolist() == [1, 0, 2]

    def test_ties_follow_id(self):
        r = rank_space_map(np.array([[0.3, 0.0], [0.3, 0.0], [0.3, 0.0]]), np.array([7, 3, 9]))
        assert r[:, 0].tolist() == [1, 0, 2]

    def test_single_point(self):
        assert rank_space_map(np.array([[4.0, 2.0]])).tolist() == [[0, 0]]

    def test_empty(self):
        with pytest.raises(ValueError):
            rank_space_map(np.empty((0, 2)))

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=40))
    def test_columns_are_permutations(self, pts):
        r = rank_space_map(np.array(pts, dtype=float))
        for axis in (0, 1):
            assert sorted(r[:, axis].tolist()) == list(range(len(pts)))


class TestZOrder:
    def test_examples(self):
        assert z_order(0, 0, 1) == 0
        assert z_order(1, 1, 1) == 3
        assert z_order(3, 5, 3) == 39 == 0b100111

    def test_matches_oracle(self):
        for b in (1, 2, 3, 5):
            for x in range(1 << b):
                for y in range(1 << b):
                    assert z_order(x, y, b) == interleave_oracle(x, y, b)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            z_order(8, 0, 3)
        with pytest.raises(ValueError):
            z_order_array([0], [-1], 3)

    @pytest.mark.parametrize("b", [1, 2, 4, 8])
    def test_bijective_exhaustive(self, b):
        side = 1 << b
        x, y = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        z = z_order_array(x.ravel(), y.ravel(), b)
        assert np.array_equal(np.sort(z), np.arange(side * side, dtype=np.uint64))
        dx, dy = z_decode_array(z)
        assert np.array_equal(dx, x.ravel()) and np.array_equal(dy, y.ravel())

    @given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
    def test_array_matches_scalar_at_32_bits(self, x, y):
        assert int(z_order_array([x], [y], 32)[0]) == z_order(x, y, 32) == interleave_oracle(x, y, 32)

    def test_bits_per_axis(self):
        assert [bits_per_axis(n) for n in (1, 2, 3, 4, 5, 1024, 1025)] == [1, 1, 2, 2, 3, 10, 11]
