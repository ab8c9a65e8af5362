import numpy as np
import pytest

from degenlab import fields as F
from degenlab import regions as R
from degenlab.eigenops import lambda_k
from degenlab.errors import BadParam, OutOfDomain


def test_gradient_examples():
    sq = F.expression_field("x1^2 + x2^2", 2, 5.0)
    assert np.allclose(F.gradient_fd(sq, [1.0, 2.0]), [2, 4], atol=1e-8)
    u, _ = F.builtin_example1(3, 1.0, 3.0)
    assert np.allclose(F.gradient_fd(u, np.zeros(3)), 0, atol=1e-8)
    g = F.expression_field("x1 * x2^2", 2, 5.0)
    assert np.allclose(F.gradient_fd(g, [2.0, 3.0]), [9, 12], atol=1e-6)


def test_hessian_examples():
    h = F.hessian_fd(F.expression_field("x1 * x2", 2), [0.3, -0.2])
    assert np.allclose(h, [[0, 1], [1, 0]], atol=1e-6)
    u, _ = F.builtin_example1(3, 1.0, 3.0)
    assert np.allclose(F.hessian_fd(u, np.zeros(3)), -6 * np.eye(3), atol=1e-4)
    u2, _ = F.builtin_example2(4, 2, 0.5)
    a = 0.5 * (0.5 - 1)
    expect = np.diag([a * 1.0 ** -1.5, a * 1.0 ** -1.5, 0, 0])
    assert np.allclose(F.hessian_fd(u2, [1.0, 1.0, 0.5, 0.5]), expect, atol=1e-4)


def test_out_of_domain():
    f = F.constant_field(2, 0.0, half_width=1.0)
    with pytest.raises(OutOfDomain):
        F.hessian_fd(f, [1.0, 0.0])
    with pytest.raises(OutOfDomain):
        F.gradient_fd(f, [0.99999, 0.0], h=1e-4)


def test_example1_values():
    u, f = F.builtin_example1(3, 1.0, 3.0)
    assert u.eval(np.zeros(3)) == pytest.approx(1.0)
    far = np.array([[1.0, 0, 0], [0, 1.2, 0], [0.8, 0.8, 0]])
    assert np.all(u.eval(far) == 0) and np.all(f.eval(far) == 0)
    assert f.eval(np.zeros(3)) == pytest.approx(-6.0)
    assert u.locus_fn is None
    with pytest.raises(BadParam):
        F.builtin_example1(3, 1.0, 2.0)
    with pytest.raises(BadParam):
        F.builtin_example1(3, -1.0, 3.0)


def test_example1_identity_on_grid():
    u, f = F.builtin_example1(3, 1.0, 3.0)
    ax = np.linspace(-0.9, 0.9, 15)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    pts = pts[np.linalg.norm(pts, axis=1) <= 0.9]
    hess = u.hess(pts)
    # independent oracle: numpy's symmetric eigensolver
    ev = np.linalg.eigvalsh(hess)
    for k in (1, 2):
        assert np.max(np.abs(ev[:, k - 1] - f.eval(pts))) <= 1e-10
        assert np.max(np.abs(lambda_k(hess, k) - f.eval(pts))) <= 1e-10


def test_example2_values_and_identity():
    u, f = F.builtin_example2(4, 2, 0.5)
    assert u.eval(np.zeros(4)) == 0.0
    assert u.eval(np.eye(4)[0]) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1.5, 1.5, size=(2000, 4))
    on_plane = pts.copy()
    on_plane[:1000, 0] = 0.0
    on_plane[1000:, 1] = 0.0
    assert np.all(f.eval(on_plane) == 0.0)
    smooth = pts[np.all(np.abs(pts[:, :2]) >= 0.1, axis=1)]
    lam = lambda_k(u.hess(smooth), 2)
    a = 0.5 * (0.5 - 1)
    closed = np.max(a * np.abs(smooth[:, :2]) ** (0.5 - 2), axis=1)
    assert np.max(np.abs(lam - closed)) <= 1e-5
    assert np.max(np.abs(F.example2_lambda_k(smooth, 2, 0.5) - closed)) <= 1e-12
    fv = f.eval(smooth)
    assert np.all(lam <= fv + 1e-12) and np.all(fv <= 0)
    with pytest.raises(BadParam):
        F.builtin_example2(3, 2, 0.5)
    with pytest.raises(BadParam):
        F.builtin_example2(4, 2, 1.5)


def test_example2_forcing_continuous_at_hyperplanes():
    _, f = F.builtin_example2(4, 2, 0.5)
    for eps in (1e-2, 1e-4, 1e-6):
        x = np.array([[eps, 0.7, 0.3, -0.2], [0.4, -eps, 0.0, 1.0]])
        assert np.all(np.abs(f.eval(x)) <= 2 * eps)


def test_analytic_vs_fd_richardson_order():
    u, _ = F.builtin_example1(3, 1.0, 3.0)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.5, 0.5, size=(100, 3))
    exact = u.hess(pts)
    e1 = np.abs(F.hessian_fd_batch(u, pts, 1e-2)[1] - exact).max(axis=(1, 2))
    e2 = np.abs(F.hessian_fd_batch(u, pts, 5e-3)[1] - exact).max(axis=(1, 2))
    order = np.log2(np.median(e1) / np.median(e2))
    assert order >= 1.8
    rel = np.abs(F.hessian_fd_batch(u, pts, 1e-4)[1] - exact).max() / np.abs(exact).max()
    assert rel <= 1e-4


def test_distance_ball_and_halfspace():
    v = F.distance_field(R.ball(3, 1.0))
    pts = np.random.default_rng(2).uniform(-1.3, 1.3, size=(500, 3))
    assert np.allclose(v.eval(pts), np.maximum(1 - np.linalg.norm(pts, axis=1), 0), atol=1e-12)
    h = F.distance_field(R.halfspace(3))
    assert np.allclose(h.eval(pts), np.maximum(pts[:, 2], 0), atol=1e-12)


def _brute_complement_distance(region, x, n=1_000_000, seed=3):
    rng = np.random.default_rng(seed)
    lo = np.asarray(region.bbox[0]) - 0.5
    hi = np.asarray(region.bbox[1]) + 0.5
    s = lo + (hi - lo) * rng.random((n, region.dim))
    out = s[~region.inside(s)]
    return float(np.min(np.linalg.norm(out - x, axis=1)))


def test_union_distance_at_origin_matches_brute_force():
    U = R.union_balls(2, [[-0.8, 0], [0.8, 0]], [1.0, 1.0])
    brute = _brute_complement_distance(U, np.zeros(2))
    exact = F.distance_field(U).eval(np.zeros(2))
    sampled = F.distance_field(U, resolution=96, exact=False).eval(np.zeros(2))
    assert exact == pytest.approx(0.6, abs=1e-12)
    assert brute == pytest.approx(exact, abs=5e-3)
    assert sampled == pytest.approx(exact, abs=5e-3)


def test_sampled_distance_lipschitz():
    U = R.union_balls(3)
    v = F.distance_field(U, resolution=40, exact=False)
    spacing = v.params["sample_spacing"]
    rng = np.random.default_rng(4)
    x = rng.uniform(-1.8, 1.8, size=(2000, 3))
    y = x + rng.normal(scale=0.2, size=x.shape)
    y = np.clip(y, -2.3, 2.3)
    gap = np.abs(v.eval(x) - v.eval(y)) - np.linalg.norm(x - y, axis=1)
    assert np.max(gap) <= 2 * spacing
    assert np.all(v.eval(x[~U.inside(x)]) == 0)
    assert np.all(v.eval(x[U.inside(x)]) > 0)


def test_indicator_field():
    U = R.ball(3, 1.0)
    v = F.indicator_field(U)
    assert v.eval(np.zeros(3)) == 1.0
    assert v.eval(np.array([2.0, 0, 0])) == 0.0
    pts = np.random.default_rng(5).uniform(-1.4, 1.4, size=(3000, 3))
    assert np.array_equal(v.eval(pts) > 0, U.inside(pts))
    # points of the boundary itself are not in the open set
    bd = np.eye(3)
    assert np.all(v.eval(bd) == 0)
    band = v.nonsmooth_near(pts, 0.05)
    assert np.all(np.abs(np.linalg.norm(pts[band], axis=1) - 1) <= 0.05 + 1e-12)


def test_expression_field_box():
    f = F.expression_field("x1 + 2*x2", 2, half_width=1.0)
    assert f.eval(np.array([1.0, 1.0])) == pytest.approx(3)
    assert not f.in_box(np.array([[1.5, 0.0]]))[0]
