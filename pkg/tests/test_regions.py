import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degenlab import regions as R
from degenlab.eigenops import random_orthogonal
from degenlab.errors import BadParam, EmptyBoundary, EmptyRegion, NotOnBoundary, NotSmooth
from degenlab.grid import GridSpec


def grid_around(region, res=24, pad=0.15):
    lo = np.asarray(region.bbox[0]) - pad
    hi = np.asarray(region.bbox[1]) + pad
    return GridSpec(tuple(lo), tuple(hi), res)


def test_builtin_membership():
    b = R.ball(3, 1.0)
    assert b.inside(np.zeros(3))[0] and not b.inside(2 * np.eye(3)[0])[0]
    u = R.union_balls(3, [[-0.8, 0, 0], [0.8, 0, 0]], [1, 1])
    assert u.inside(np.zeros(3))[0]
    assert u.inside([1.6, 0, 0])[0]
    assert not u.inside([3.0, 0, 0])[0]
    t = R.torus_solid(2.0, 0.5)
    assert t.signed_dist(np.array([[2.5, 0, 0]]))[0] == pytest.approx(0.0, abs=1e-15)
    assert t.inside([2.0, 0, 0])[0] and not t.inside([0.0, 0, 0])[0]


def test_builtin_by_name():
    r = R.builtin_region("ball", dim=2, radius=2.0)
    assert r.inside([1.9, 0])[0]
    g = R.builtin_region("graph_epigraph", height="x1^2", dim=2)
    assert g.inside([0.5, 0.3])[0] and not g.inside([0.5, 0.2])[0]
    c = R.builtin_region("complement", inner={"name": "ball", "params": {"dim": 2}})
    assert c.inside([1.5, 0])[0] and not c.inside([0.0, 0])[0]
    with pytest.raises(BadParam):
        R.builtin_region("pretzel")


def test_bad_params():
    with pytest.raises(BadParam):
        R.torus_solid(1.0, 1.0)
    with pytest.raises(BadParam):
        R.union_balls(3, [[-2, 0, 0], [2, 0, 0]], [1, 1])
    with pytest.raises(BadParam):
        R.ball(2, -1.0)


@pytest.mark.parametrize("name", ["ball", "halfspace", "slab", "torus_solid", "union_balls", "l_shape"])
def test_sign_agreement(name):
    region = R.builtin_region(name)
    pts = np.random.default_rng(0).uniform(-2.6, 2.6, size=(20000, region.dim))
    sd = region.signed_dist(pts)
    clear = np.abs(sd) > 1e-9
    assert np.array_equal(region.inside(pts)[clear], (sd < 0)[clear])


def test_chart_consistency():
    g = R.graph_epigraph(lambda q: q[:, 0] ** 2 - q[:, 1] ** 2, 3)
    pts = np.random.default_rng(1).uniform(-1, 1, size=(2000, 3))
    above = pts[:, 2] > pts[:, 0] ** 2 - pts[:, 1] ** 2
    assert np.all(g.inside(pts[above]))


def test_cylinder_parts():
    c = R.Cylinder(1, 1.0, 1.0, np.zeros(3), np.eye(3))
    lat = R.cylinder_points(c, "lateral", 6)
    assert np.allclose(np.abs(lat[:, 0]), 1.0)
    clo = R.cylinder_points(c, "closure", 6)
    c2 = R.Cylinder(2, 0.7, 0.3, np.zeros(4), np.eye(4))
    p = R.cylinder_points(c2, "closure", 6)
    assert np.all(np.maximum(np.linalg.norm(p[:, :2], axis=1) / 0.7,
                             np.linalg.norm(p[:, 2:], axis=1) / 0.3) <= 1 + 1e-12)
    inner = R.cylinder_points(c, "interior", 6)
    keys = {tuple(np.round(x, 12)) for x in clo}
    assert all(tuple(np.round(x, 12)) in keys for x in np.vstack([lat, inner]))


def test_cylinder_rigid_invariance_exact():
    rng = np.random.default_rng(2)
    q = random_orthogonal(rng, 3)
    z = rng.normal(size=3)
    base = R.Cylinder(1, 0.4, 0.2, np.zeros(3), np.eye(3))
    moved = R.Cylinder(1, 0.4, 0.2, z, q)
    a = R.cylinder_points(base, "closure", 4) @ q.T + z
    b = R.cylinder_points(moved, "closure", 4)
    assert np.array_equal(a, b)


def test_cylinder_validation():
    with pytest.raises(BadParam):
        R.Cylinder(3, 1.0, 1.0, np.zeros(3), np.eye(3))
    with pytest.raises(BadParam):
        R.Cylinder(1, -1.0, 1.0, np.zeros(3), np.eye(3))
    with pytest.raises(BadParam):
        R.Cylinder(1, 1.0, 1.0, np.zeros(3), 2 * np.eye(3))


def _two_far_balls():
    def sd(p):
        return np.minimum(np.linalg.norm(p - [-1.5, 0, 0], axis=1), np.linalg.norm(p - [1.5, 0, 0], axis=1)) - 1
    return R.from_signed_distance(sd, 3, [-2.5, -1, -1], [2.5, 1, 1])


def test_components():
    g = GridSpec((-2.7, -1.2, -1.2), (2.7, 1.2, 1.2), 30)
    comps = R.connected_components(_two_far_balls(), g)
    assert len(comps) == 2
    assert len(R.connected_components(R.union_balls(3), grid_around(R.union_balls(3)))) == 1
    assert len(R.connected_components(R.slab(3), grid_around(R.slab(3)))) == 1
    # partition: every inside grid point lies in exactly one component
    pts = g.points()
    inside = pts[_two_far_balls().inside(pts)]
    allc = np.vstack(comps)
    assert len(allc) == len(inside)
    assert len(np.unique(allc, axis=0)) == len(inside)
    assert len(comps[0]) >= len(comps[1])


def test_components_errors():
    with pytest.raises(BadParam):
        R.connected_components(R.ball(3, 0.1), GridSpec.cube(3, 1.0, 4))
    with pytest.raises(EmptyRegion):
        R.connected_components(R.ball(3, 0.01, center=[0.05, 0.05, 0.05]), GridSpec.cube(3, 1.0, 9))


def test_convexity():
    rng = np.random.default_rng(3)
    disk = R.ball(2, 1.0)
    comp = R.connected_components(disk, grid_around(disk, 30))[0]
    assert R.is_component_convex(comp, disk, 2000, rng).convex
    for region in (R.l_shape(2), R.union_balls(2)):
        comp = R.connected_components(region, grid_around(region, 30))[0]
        res = R.is_component_convex(comp, region, 2000, rng)
        assert not res.convex
        x, y, z = res.witness
        assert region.inside(x)[0] and region.inside(y)[0] and not region.inside(z)[0]
        # the outside point lies on the segment
        t = np.dot(z - x, y - x) / np.dot(y - x, y - x)
        assert 0 < t < 1 and np.allclose(x + t * (y - x), z, atol=1e-9)


def test_union_segment_across_waist_leaves():
    u = R.union_balls(3)
    seg = np.linspace([-0.8, 0.95, 0], [0.8, 0.95, 0], 101)
    assert not np.all(u.inside(seg))


@pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
def test_ball_curvature(radius):
    b = R.ball(3, radius)
    pts = R.boundary_sample(b, grid_around(b, 12))
    for p in pts[:: max(1, len(pts) // 40)]:
        pc = R.principal_curvatures(b, p)
        assert np.allclose(pc.kappas, 1 / radius, atol=1e-6)


def test_halfspace_and_slab_curvature():
    for region in (R.halfspace(3), R.slab(3)):
        pts = R.boundary_sample(region, grid_around(region, 10))
        for p in pts[:: max(1, len(pts) // 30)]:
            assert np.allclose(R.principal_curvatures(region, p).kappas, 0, atol=1e-8)


def torus_kappas(p, major=2.0):
    # closed form: 1/minor around the tube and cos(theta)/(major + minor cos(theta)) along it
    rho = np.hypot(p[0], p[1])
    cos_t = (rho - major) / np.hypot(rho - major, p[2])
    return np.sort([cos_t / rho, 2.0])


def test_torus_curvature_closed_form():
    t = R.torus_solid()
    pts = R.boundary_sample(t, grid_around(t, 20))
    assert np.max(np.abs(t.signed_dist(pts))) <= 1e-8
    for p in pts[:: max(1, len(pts) // 60)]:
        assert np.allclose(R.principal_curvatures(t, p).kappas, torus_kappas(p), atol=1e-6)
    inner = R.principal_curvatures(t, np.array([1.5, 0, 0]))
    assert inner.kappas[0] == pytest.approx(-1 / 1.5, abs=1e-5)


def test_boundary_samples_on_boundary():
    b = R.ball(3)
    pts = R.boundary_sample(b, grid_around(b, 16))
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1)) <= 1e-8
    h = R.halfspace(3)
    pts = R.boundary_sample(h, grid_around(h, 9))
    assert np.max(np.abs(pts[:, 2])) <= 1e-8
    with pytest.raises(EmptyBoundary):
        R.boundary_sample(R.ball(3, 10.0), GridSpec.cube(3, 1.0, 5))


def test_curvature_errors():
    with pytest.raises(NotOnBoundary):
        R.principal_curvatures(R.ball(3), np.zeros(3))
    with pytest.raises(NotSmooth):
        R.principal_curvatures(R.l_shape(3), np.array([0.0, 0.0, 0.3]))


def test_convex_builtins_nonnegative_curvature():
    for region in (R.ball(3), R.slab(3), R.halfspace(3)):
        pts = R.boundary_sample(region, grid_around(region, 10))
        ks = np.array([R.principal_curvatures(region, p).kappas for p in pts[::7]])
        assert np.all(ks >= -1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_curvature_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    q = random_orthogonal(rng, 3)
    z = rng.uniform(-1, 1, size=3)
    t = R.torus_solid()
    moved = R.rigid(t, q, z)
    theta, phi = rng.uniform(0, 2 * np.pi, size=2)
    p = np.array([(2 + 0.5 * np.cos(theta)) * np.cos(phi), (2 + 0.5 * np.cos(theta)) * np.sin(phi),
                  0.5 * np.sin(theta)])
    a = R.principal_curvatures(t, p).kappas
    b = R.principal_curvatures(moved, q @ p + z).kappas
    assert np.allclose(a, b, atol=1e-8)


def test_intersection_and_from_field():
    both = R.intersection(R.ball(3), R.halfspace(3))
    assert both.inside([0, 0, 0.5])[0] and not both.inside([0, 0, -0.5])[0]
    pos = R.from_field(lambda p: 1 - np.sum(p * p, axis=1), 3, [-1] * 3, [1] * 3)
    assert pos.inside(np.zeros(3))[0] and not pos.inside([1.0, 0, 0])[0]
