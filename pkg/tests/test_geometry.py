import numpy as np
import pytest
from hypothesis import given, strategies as st

from obstakl import geometry as ge
from obstakl.mesh import geometric_edges

from conftest import rng

coords = st.floats(-3, 3, allow_nan=False)


def test_primitive_examples():
    assert ge.circle((0, 0), 1).eval(np.array([0.0, 0.0])) == pytest.approx(-1)
    assert ge.circle((0, 0), 1).eval(np.array([2.0, 0.0])) == pytest.approx(1)
    assert ge.rectangle((0, 0), (1, 1)).eval(np.array([0.5, 0.0])) == pytest.approx(-0.5)
    assert ge.sdf_primitives("circle", (0, 0), 1).eval(np.zeros(2)) == pytest.approx(-1)


@pytest.mark.parametrize("bad", [
    lambda: ge.circle((0, 0), 0.0),
    lambda: ge.circle((0, 0), -1.0),
    lambda: ge.rectangle((0, 0), (1.0, 0.0)),
    lambda: ge.sdf_primitives("hexagon", 1),
])
def test_invalid_shapes(bad):
    with pytest.raises(ge.InvalidShapeError):
        bad()


def test_combinators_are_min_max():
    a = ge.circle((0, 0), 1)
    b = ge.circle((1, 0), 1)
    x = rng().uniform(-2, 3, (2, 50))
    np.testing.assert_array_equal(ge.union(a, b).eval(x), np.minimum(a.eval(x), b.eval(x)))
    np.testing.assert_array_equal(ge.intersection(a, b).eval(x), np.maximum(a.eval(x), b.eval(x)))
    np.testing.assert_array_equal(ge.difference(a, b).eval(x), np.maximum(a.eval(x), -b.eval(x)))


@given(st.floats(0.05, 0.95), st.floats(0, 2 * np.pi))
def test_inside_primitive_negative_outside_positive(r, phi):
    c = ge.circle((0.3, -0.2), 1.5)
    p = np.array([0.3 + 1.5 * r * np.cos(phi), -0.2 + 1.5 * r * np.sin(phi)])
    assert c.eval(p) < 0
    q = np.array([0.3 + 1.5 * (1 + r) * np.cos(phi), -0.2 + 1.5 * (1 + r) * np.sin(phi)])
    assert c.eval(q) > 0


@given(st.floats(-0.8, 0.8), st.floats(-0.3, 0.3))
def test_gradient_norm_near_one_away_from_medial_axis(x, y):
    # rectangle half-widths (1, 0.5); medial axis: |y| - 0.5 = |x| - 1 region and y = 0 segment
    r = ge.rectangle((0, 0), (1, 0.5))
    p = np.array([x, y])
    dx, dy = 1 - abs(x), 0.5 - abs(y)
    if abs(dx - dy) < 1e-3 or abs(y) < 1e-3:
        return
    g = r.grad(p)
    assert 0.95 <= np.hypot(*g) <= 1.05


@given(st.floats(-30, 30), st.floats(-50, 50))
def test_ipn80_symmetry(x, y):
    f = ge.sdf_ipn80()
    v = f.eval(np.array([x, y]))
    assert f.eval(np.array([-x, y])) == pytest.approx(v, abs=1e-12)
    assert f.eval(np.array([x, -y])) == pytest.approx(v, abs=1e-12)


def test_ipn80_examples():
    pr = ge.ProfileIPN80()
    f = ge.sdf_ipn80(pr)
    assert f.eval(np.zeros(2)) < 0
    assert f.eval(np.array([0.0, pr.h / 2 + 1.0])) > 0
    # web midpoint lies t_w/2 from the web faces
    delta = ge.distance_to_boundary(f, np.zeros(2))
    assert delta == pytest.approx(pr.t_w / 2, rel=0.05)


def test_ipn80_area_monte_carlo():
    # tabulated IPN 80 cross-section area: 7.57 cm²
    pr = ge.ProfileIPN80()
    f = ge.sdf_ipn80(pr)
    n = 400_000
    x = rng(1).uniform([-pr.b / 2, -pr.h / 2], [pr.b / 2, pr.h / 2], (n, 2)).T
    area = np.mean(f.eval(x) < 0) * pr.b * pr.h / 100.0
    assert area == pytest.approx(7.57, rel=0.02)


@pytest.mark.parametrize("kw", [dict(t_w=50.0), dict(t_f=45.0), dict(r1=0.0), dict(h=-1.0)])
def test_ipn80_profile_validation(kw):
    with pytest.raises(ge.InvalidShapeError):
        ge.ProfileIPN80(**kw)


def test_distance_to_boundary_examples():
    c = ge.circle((0, 0), 1)
    assert ge.distance_to_boundary(c, np.array([0.0, 0.0])) == pytest.approx(1)
    assert ge.distance_to_boundary(c, np.array([1.0, 0.0])) == pytest.approx(0, abs=1e-15)
    assert ge.distance_to_boundary(c, np.array([3.0, 0.0])) == 0.0


@given(coords, coords, coords, coords)
def test_distance_is_lipschitz(x1, y1, x2, y2):
    f = ge.sdf_ipn80()
    a, b = np.array([x1, y1]) * 10, np.array([x2, y2]) * 10
    d = abs(ge.distance_to_boundary(f, a) - ge.distance_to_boundary(f, b))
    assert d <= np.linalg.norm(a - b) + 1e-9


def _check_generated(mesh):
    # every interior edge in exactly two triangles, boundary edge in one
    t = mesh.triangles
    e = np.sort(t[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert set(np.unique(counts)) <= {1, 2}
    assert np.all(mesh.signed_areas() > 0)


def test_distmesh_circle_boundary_on_zero_set():
    c = ge.circle((0, 0), 1)
    m = ge.distmesh_generate(c, 0.4, [(-1.1, -1.1), (1.1, 1.1)])
    _check_generated(m)
    bv = m.boundary_vertices()
    assert np.max(np.abs(c.eval(m.vertices[bv].T))) <= 4e-4


def test_distmesh_circle_quality():
    c = ge.circle((0, 0), 1)
    m = ge.distmesh_generate(c, 0.2, [(-1.1, -1.1), (1.1, 1.1)])
    _check_generated(m)
    assert m.info["distmesh"].converged
    assert m.quality().min() >= 0.5


def test_distmesh_ipn80_is_simply_connected():
    sdf = ge.scaled(ge.sdf_ipn80(), 1e-3)
    m = ge.distmesh_generate(sdf, 2e-3, [(-0.025, -0.045), (0.025, 0.045)])
    _check_generated(m)
    V, E, F = m.nvertices, len(geometric_edges(m)), m.ntriangles
    assert V - E + F == 1
    info = m.info["distmesh"]
    assert info.converged or info.warnings


def test_distmesh_empty_domain():
    with pytest.raises(ValueError):
        ge.distmesh_generate(ge.circle((10, 10), 0.1), 0.5, [(-1, -1), (1, 1)])
    with pytest.raises(ValueError):
        ge.distmesh_generate(ge.circle((0, 0), 1), 0.0, [(-1, -1), (1, 1)])
