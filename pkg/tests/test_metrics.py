import math

import numpy as np
import pytest
from scipy import integrate
from hypothesis import assume, given, settings, strategies as st

from circuitsel.metrics import FaithfulnessCurve, cmd, cpr, curve_from_pairs, sweep_sizes


def curve(*pts):
    return FaithfulnessCurve(tuple(pts))


def quad_integral(c, fn):
    """Oracle: adaptive quadrature of fn(interpolant), one segment at a time."""
    total = 0.0
    for (x0, y0), (x1, y1) in zip(c.points, c.points[1:]):
        line = lambda x: y0 + (x - x0) / (x1 - x0) * (y1 - y0)
        # tell quad where |y - 1| has its kink
        kinks = [x0 + (1 - y0) / (y1 - y0) * (x1 - x0)] if (y0 - 1) * (y1 - 1) < 0 else None
        total += integrate.quad(lambda x: fn(line(x)), x0, x1, points=kinks, limit=200, epsabs=1e-13)[0]
    return total / (c.points[-1][0] - c.points[0][0])


point_lists = st.lists(
    st.tuples(st.floats(0, 1, allow_nan=False), st.floats(-3, 3, allow_nan=False)), min_size=2, max_size=8,
    unique_by=lambda p: p[0],
).map(lambda ps: sorted(ps))


class TestCurve:
    @pytest.mark.parametrize("pts", [
        [(0.0, 1.0)],
        [(0.5, 1.0), (0.5, 2.0)],
        [(0.5, 1.0), (0.2, 2.0)],
        [(0.0, 1.0), (1.5, 2.0)],
        [(0.0, float("nan")), (1.0, 1.0)],
    ])
    def test_rejects(self, pts):
        with pytest.raises(ValueError):
            FaithfulnessCurve(tuple(pts))

    def test_roundtrip(self):
        c = curve((0.0, 0.1), (1.0, 0.9))
        assert FaithfulnessCurve.from_dict(c.to_dict()) == c


class TestCpr:
    def test_constant(self):
        assert cpr(curve((0.0, 2.0), (1.0, 2.0))) == 2.0

    def test_ramp(self):
        assert cpr(curve((0.0, 0.0), (1.0, 1.0))) == 0.5

    def test_trapezoids(self):
        assert cpr(curve((0.0, 0.0), (0.5, 1.0), (1.0, 1.0))) == 0.75

    def test_normalized_by_span(self):
        assert cpr(curve((0.2, 3.0), (0.6, 3.0))) == pytest.approx(3.0, abs=1e-15)


class TestCmd:
    def test_optimal(self):
        assert cmd(curve((0.0, 1.0), (0.3, 1.0), (1.0, 1.0))) == 0.0

    def test_constant_half(self):
        assert cmd(curve((0.0, 0.5), (1.0, 0.5))) == 0.5

    def test_crossing(self):
        assert cmd(curve((0.0, 0.0), (1.0, 2.0))) == 0.5

    def test_over_faithful_counts(self):
        assert cmd(curve((0.0, 1.5), (1.0, 1.5))) == 0.5

    @settings(max_examples=200, deadline=None)
    @given(pts=point_lists)
    def test_zero_only_for_flat_one(self, pts):
        assume(pts[-1][0] - pts[0][0] > 1e-3)
        c = curve(*pts)
        assert (cmd(c) == 0.0) == all(y == 1.0 for _, y in pts)


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(pts=point_lists)
    def test_match_quadrature(self, pts):
        assume(pts[-1][0] - pts[0][0] > 1e-2)
        c = curve(*pts)
        assert cpr(c) == pytest.approx(quad_integral(c, lambda y: y), abs=1e-6)
        assert cmd(c) == pytest.approx(quad_integral(c, lambda y: abs(y - 1)), abs=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(pts=point_lists, t=st.floats(0.01, 0.99))
    def test_collinear_insertion(self, pts, t):
        assume(pts[-1][0] - pts[0][0] > 1e-3)
        (x0, y0), (x1, y1) = pts[0], pts[1]
        x = x0 + t * (x1 - x0)
        assume(x0 < x < x1)
        y = y0 + (x - x0) / (x1 - x0) * (y1 - y0)
        a, b = curve(*pts), curve(pts[0], (x, y), *pts[1:])
        assert cpr(b) == pytest.approx(cpr(a), abs=1e-9)
        assert cmd(b) == pytest.approx(cmd(a), abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(pts=point_lists)
    def test_below_one_sums_to_one(self, pts):
        assume(pts[-1][0] - pts[0][0] > 1e-3)
        c = curve(*[(x, min(y, 1.0)) for x, y in pts])
        assert abs(cpr(c) + cmd(c) - 1.0) <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(pts=point_lists, i=st.integers(0, 7), eps=st.floats(-0.5, 0.5))
    def test_lipschitz_in_values(self, pts, i, eps):
        assume(pts[-1][0] - pts[0][0] > 1e-3)
        i %= len(pts)
        moved = list(pts)
        moved[i] = (pts[i][0], pts[i][1] + eps)
        a, b = curve(*pts), curve(*moved)
        assert abs(cpr(a) - cpr(b)) <= abs(eps) * (1 + 1e-9) + 1e-12
        assert abs(cmd(a) - cmd(b)) <= abs(eps) * (1 + 1e-9) + 1e-12

    def test_zero_span_impossible(self):
        with pytest.raises(ValueError):
            curve_from_pairs([0.5], [1.0])


class TestSweepSizes:
    def test_simple(self):
        assert sweep_sizes(100, [0.01, 0.1, 1.0]) == [1, 10, 100]

    def test_dedup_and_clip(self):
        assert sweep_sizes(10, [0.0, 0.01, 0.04, 0.05]) == [1]

    def test_default_grid_strictly_increasing(self):
        ks = sweep_sizes(1000)
        assert ks == sorted(set(ks)) and ks[0] == 1 and ks[-1] == 1000
        expected = sorted({min(max(math.floor(f * 1000 + 0.5), 1), 1000) for f in np.logspace(-3, 0, 10)})
        assert ks == expected and len(ks) == 10

    def test_rejects(self):
        with pytest.raises(ValueError):
            sweep_sizes(0)
        with pytest.raises(ValueError):
            sweep_sizes(10, [1.5])
