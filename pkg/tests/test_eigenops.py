import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degenlab import eigenops as E
from degenlab.eigenops import OperatorSpec, SymMatrix
from degenlab.errors import IndexOutOfRange, NonFinite, PlugUnavailable


def charpoly_roots(a, steps=4000, iters=200):
    """Oracle: Faddeev-LeVerrier coefficients, sign scan and bisection."""
    n = len(a)
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    poly = lambda t: sum(c * t ** (n - i) for i, c in enumerate(coeffs))  # noqa: E731
    bound = np.max(np.sum(np.abs(a), axis=1)) + 1.0
    ts = np.linspace(-bound, bound, steps)
    vals = np.array([poly(t) for t in ts])
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        lo, hi = ts[i], ts[i + 1]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if np.sign(poly(mid)) == np.sign(poly(lo)):
                lo = mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return np.array(roots)


def test_diagonal_sorted():
    assert np.allclose(E.sorted_eigenvalues(np.diag([3.0, 1.0, 2.0])), [1, 2, 3])


def test_rank_one_minus_identity():
    p = np.array([1.0, 0, 0])
    vals = E.sorted_eigenvalues(5 * np.outer(p, p) - np.eye(3))
    assert np.allclose(vals, [-1, -1, 4], atol=1e-12)


def test_random_4x4_against_characteristic_polynomial():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = E.random_symmetric(rng, 4)
        roots = charpoly_roots(a)
        assert len(roots) == 4
        assert np.allclose(E.sorted_eigenvalues(a), np.sort(roots), atol=1e-9)


def test_decomposition_invariants():
    rng = np.random.default_rng(1)
    x = E.random_symmetric(rng, 6, 200)
    dec = E.eigenvalues_sorted(x)
    assert np.all(np.diff(dec.values, axis=-1) >= 0)
    v = dec.vectors
    gram = np.swapaxes(v, -1, -2) @ v
    assert np.max(np.abs(gram - np.eye(6))) <= 1e-12
    recon = v @ (dec.values[..., :, None] * np.swapaxes(v, -1, -2))
    scale = 1 + np.max(np.abs(x), axis=(-1, -2))
    assert np.all(np.max(np.abs(recon - x), axis=(-1, -2)) <= 1e-10 * scale)


def test_nonfinite_rejected():
    with pytest.raises(NonFinite):
        E.sorted_eigenvalues(np.array([[np.nan, 0], [0, 1.0]]))
    with pytest.raises(NonFinite):
        SymMatrix(2, [1.0, np.inf, 0.0])


def test_symmatrix_roundtrip():
    a = np.array([[1.0, 2.0], [2.0, 3.0]])
    s = SymMatrix.from_array(a)
    assert np.array_equal(s.to_array(), a)
    assert s == SymMatrix.from_array(a)
    assert E.lambda_k(s, 1) == pytest.approx(np.linalg.eigvalsh(a)[0], abs=1e-12)


def test_lambda_k_examples():
    assert E.lambda_k(np.diag([-3.0, 1, 1]), 2) == pytest.approx(1.0)
    x = E.random_symmetric(np.random.default_rng(2), 5)
    assert E.lambda_k(x, 1) == pytest.approx(np.min(np.linalg.eigvalsh(x)), abs=1e-12)
    with pytest.raises(IndexOutOfRange):
        E.lambda_k(x, 6)
    with pytest.raises(IndexOutOfRange):
        E.lambda_k(x, 0)


def test_pminus_pplus_examples():
    assert E.pminus_k(np.diag([-3.0, 1, 1]), 2) == pytest.approx(-2.0)
    for n in range(2, 7):
        for k in range(1, n + 1):
            assert E.pminus_k(np.eye(n), k) == pytest.approx(k)
    x = E.random_symmetric(np.random.default_rng(3), 5)
    ev = np.linalg.eigvalsh(x)
    assert E.pplus_k(x, 2) == pytest.approx(ev[-2:].sum(), abs=1e-12)
    p = np.random.default_rng(4).normal(size=4)
    p /= np.linalg.norm(p)
    assert E.pminus_k(7.5 * np.outer(p, p) - np.eye(4), 2) == pytest.approx(-2.0, abs=1e-12)


def test_pminus_frame():
    val, frame = E.pminus_k_frame(np.diag([1.0, 2.0, 3.0]), 2)
    assert val == pytest.approx(3.0)
    assert np.allclose(np.abs(frame), np.eye(3)[:, :2])
    rng = np.random.default_rng(5)
    x = E.random_symmetric(rng, 5, 500)
    v, f = E.pminus_k_frame(x, 3)
    assert np.max(np.abs(v - E.pminus_k(x, 3))) <= 1e-12
    q = E.random_orthogonal(rng, 5, 500)
    rot = q @ x @ np.swapaxes(q, -1, -2)
    v2, _ = E.pminus_k_frame(rot, 3)
    assert np.max(np.abs(v2 - v)) <= 1e-12


def test_pminus_frame_beats_random_frames():
    # the eigenvector frame minimises the trace over orthonormal k-frames
    rng = np.random.default_rng(6)
    x = E.random_symmetric(rng, 4)
    best, _ = E.pminus_k_frame(x, 2)
    q = E.random_orthogonal(rng, 4, 2000)[..., :2]
    traces = np.einsum("mij,ik,mkj->m", q, x, q)
    assert np.min(traces) >= best - 1e-12


def test_operator_eval_examples():
    assert E.operator_eval(OperatorSpec("lambda_k", 1), 2 * np.eye(3)) == pytest.approx(2.0)
    assert E.operator_eval(OperatorSpec("pminus_k", 2), np.diag([-3.0, 1, 1])) == pytest.approx(-2.0)
    # phi = alpha (sum_{i>h} x_i^2 - beta sum_{i<=h} x_i^2): lambda_k(D^2 phi) = 2 alpha for h < k
    alpha, h, n = 1.0, 1, 3
    for beta in (0.5, 3.0, 40.0):
        hess = 2 * alpha * np.diag([-beta] * h + [1.0] * (n - h))
        assert E.operator_eval(OperatorSpec("lambda_k", 2), hess) == pytest.approx(2 * alpha)
        # P_k^- of the same Hessian is 2 alpha (-h beta + k - h)
        assert E.pminus_k(hess, 2) == pytest.approx(2 * alpha * (-h * beta + 2 - h))


def test_plug_operator():
    op = OperatorSpec("plug", 1, plug="trace_test")
    with pytest.raises(PlugUnavailable):
        E.operator_eval(op, np.eye(2))
    E.register_operator("trace_test", lambda a, k: np.trace(a, axis1=-2, axis2=-1))
    try:
        assert E.operator_eval(op, np.eye(3)) == pytest.approx(3.0)
        rep = E.check_operator_axioms(op, 3, np.random.default_rng(0), 200)
        assert rep.ok
    finally:
        E.unregister_operator("trace_test")


def test_out_of_scope_rejected():
    from degenlab.errors import OutOfScope

    with pytest.raises(OutOfScope):
        OperatorSpec("lambda_k", 3).require_degenerate(3)


@pytest.mark.parametrize("kind", ["lambda_k", "pminus_k", "pplus_k"])
def test_axioms_hold_for_builtins(kind):
    rng = np.random.default_rng(7)
    for n in (2, 3, 5):
        for k in range(1, n + 1):
            rep = E.check_operator_axioms(OperatorSpec(kind, k), n, rng, 1000)
            assert rep.ok, rep.worst


def test_orthogonal_invariance():
    rng = np.random.default_rng(8)
    x = E.random_symmetric(rng, 5, 300)
    q = E.random_orthogonal(rng, 5, 300)
    rot = q @ x @ np.swapaxes(q, -1, -2)
    for kind in ("lambda_k", "pminus_k", "pplus_k"):
        for k in (1, 3):
            op = OperatorSpec(kind, k)
            assert np.max(np.abs(E.operator_eval(op, rot) - E.operator_eval(op, x))) <= 1e-10
    v1, _ = E.pminus_k_frame(rot, 2)
    v0, _ = E.pminus_k_frame(x, 2)
    assert np.max(np.abs(v1 - v0)) <= 1e-10


def test_k_monotonicity():
    x = E.random_symmetric(np.random.default_rng(9), 5, 1000)
    vals = E.sorted_eigenvalues(x)
    assert np.all(np.diff(vals, axis=-1) >= 0)
    for k in range(1, 5):
        nonpos_next = E.pminus_k(x, k + 1) <= 0
        assert np.all(E.pminus_k(x, k)[nonpos_next] <= 0)


def test_pminus_dominated_by_k_lambda():
    x = E.random_symmetric(np.random.default_rng(10), 4, 2000)
    for k in range(1, 5):
        assert np.all(E.pminus_k(x, k) <= k * E.lambda_k(x, k) + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.floats(1e-3, 100.0), st.integers(0, 2 ** 32 - 1))
def test_subunit_identities_property(n, gamma, seed):
    p = np.random.default_rng(seed).normal(size=n)
    x = gamma * np.outer(p, p) / (p @ p) - np.eye(n)
    for k in range(1, n):
        assert abs(E.lambda_k(x, k) + 1) <= 1e-12
        assert abs(E.pminus_k(x, k) + k) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.floats(-50, 50), st.integers(0, 2 ** 32 - 1))
def test_translation_property(n, t, seed):
    x = E.random_symmetric(np.random.default_rng(seed), n)
    for k in range(1, n + 1):
        assert abs(E.lambda_k(x + t * np.eye(n), k) - E.lambda_k(x, k) - t) <= 1e-10
        assert abs(E.pminus_k(x + t * np.eye(n), k) - E.pminus_k(x, k) - k * t) <= 1e-10
