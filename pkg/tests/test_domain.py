import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from eternal_lab.domain import CylinderWindow, SpatialDomain, build_grid, parabolic_distance
from eternal_lab.errors import EmptyInterior, OriginOutside

L_SHAPE = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]


def test_interval_quarter_spacing_gives_three_nodes():
    g = build_grid(SpatialDomain.interval(-math.pi / 2, math.pi / 2), math.pi / 4)
    assert g.size == 3
    np.testing.assert_allclose(g.nodes[:, 0], [-math.pi / 4, 0.0, math.pi / 4], atol=1e-15)
    assert g.nodes[g.origin_node, 0] == pytest.approx(0.0, abs=1e-15)


def test_interval_eighth_spacing_gives_seven_nodes():
    g = build_grid(SpatialDomain.interval(-math.pi / 2, math.pi / 2), math.pi / 8)
    assert g.size == 7


def test_origin_node_on_shifted_interval():
    g = build_grid(SpatialDomain.interval(0.0, math.pi, origin=math.pi / 2), math.pi / 100)
    assert g.size == 99
    assert g.nodes[g.origin_node, 0] == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("shift", [(-0.5, -0.5), (-0.25, -0.75)])
def test_l_shape_matches_lattice_enumeration(shift):
    verts = [(x + shift[0], y + shift[1]) for x, y in L_SHAPE]
    dom = SpatialDomain.polygon(verts, origin=(0.0, 0.0))
    h = 0.25
    g = build_grid(dom, h)
    # independent oracle: strict interior of the shapely polygon on the same lattice
    poly = Polygon(verts)
    xs = np.arange(shift[0], shift[0] + 2 + 1e-9, h)
    ys = np.arange(shift[1], shift[1] + 2 + 1e-9, h)
    expected = {(round(x, 9), round(y, 9)) for x in xs for y in ys if poly.contains(Point(x, y))}
    got = {(round(x, 9), round(y, 9)) for x, y in g.nodes}
    assert got == expected
    assert all(dom.contains(p) for p in g.nodes)


def test_origin_outside_raises():
    with pytest.raises(OriginOutside):
        build_grid(SpatialDomain.interval(1.0, 2.0, origin=0.0), 0.25)


def test_spacing_too_coarse_raises():
    with pytest.raises(ValueError):
        build_grid(SpatialDomain.interval(0.0, 1.0, origin=0.5), 0.5)


def test_empty_interior_or_bad_lattice():
    with pytest.raises((EmptyInterior, ValueError)):
        build_grid(SpatialDomain.interval(0.0, 1.0, origin=0.5), 0.3)


def test_rectangle_tensor_count():
    g = build_grid(SpatialDomain.rectangle(0, math.pi, 0, math.pi, origin=(math.pi / 2, math.pi / 2)), math.pi / 16)
    assert g.size == 15 * 15


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=200))
def test_refinement_doubles_interval_nodes(n):
    lo, hi = -1.0, 1.0
    h = (hi - lo) / (2 * n)
    g1 = build_grid(SpatialDomain.interval(lo, hi), h)
    g2 = build_grid(SpatialDomain.interval(lo, hi), h / 2)
    assert g2.size >= 2 * g1.size


def test_parabolic_distance_examples():
    assert parabolic_distance((0.0, 0.0), (0.0, 4.0)) == pytest.approx(2.0)
    assert parabolic_distance((1.5, 2.0), (1.5, 2.0)) == 0.0
    assert parabolic_distance((3.0, 0.0), (0.0, 4.0)) == pytest.approx(3.0)


coords = st.floats(min_value=-10, max_value=10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.tuples(coords, coords, coords), st.tuples(coords, coords, coords))
def test_parabolic_distance_symmetric_and_definite(p, q):
    d = parabolic_distance(p, q)
    assert d == parabolic_distance(q, p)
    assert (d == 0) == (tuple(p) == tuple(q))


def test_cylinder_window_steps():
    w = CylinderWindow(-5.0, 15.0, 1e-3)
    assert w.steps == 20000
    assert w.times[0] == -5.0 and w.times[-1] == pytest.approx(15.0)
    with pytest.raises(ValueError):
        CylinderWindow(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        CylinderWindow(0.0, 1.0, 0.3)
