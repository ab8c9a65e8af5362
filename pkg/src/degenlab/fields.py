"""Scalar fields, finite differences and the builtin catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import BadParam, EmptyBoundary, EmptyComplement, OutOfDomain
from .expr import Expression, evaluate, parse_expression
from .grid import GridSpec
from .regions import RegionSpec, boundary_sample

__all__ = [
    "ScalarField", "GridSpec", "gradient_fd", "hessian_fd", "hessian_fd_batch",
    "builtin_example1", "builtin_example2", "distance_field", "indicator_field",
    "expression_field", "constant_field",
]

Vectorised = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """A real function on a box.

    ``eval_fn`` maps (M, N) to (M,); ``grad_fn`` to (M, N); ``hess_fn`` to
    (M, N, N).  ``locus_fn(points, radius)`` flags points within ``radius``
    of a known nonsmooth set.
    """

    dim: int
    eval_fn: Vectorised
    domain_box: Tuple[Tuple[float, ...], Tuple[float, ...]]
    grad_fn: Optional[Vectorised] = None
    hess_fn: Optional[Vectorised] = None
    locus_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    name: str = "field"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        p = np.asarray(x, dtype=float)
        if p.ndim == 1:
            return float(self.eval_fn(p[None, :])[0])
        return np.asarray(self.eval_fn(p), dtype=float)

    def grad(self, x) -> Optional[np.ndarray]:
        if self.grad_fn is None:
            return None
        p = np.asarray(x, dtype=float)
        out = self.grad_fn(np.atleast_2d(p))
        return out[0] if p.ndim == 1 else out

    def hess(self, x) -> Optional[np.ndarray]:
        if self.hess_fn is None:
            return None
        p = np.asarray(x, dtype=float)
        out = self.hess_fn(np.atleast_2d(p))
        return out[0] if p.ndim == 1 else out

    def nonsmooth_near(self, x, radius: float) -> np.ndarray:
        p = np.atleast_2d(np.asarray(x, dtype=float))
        if self.locus_fn is None:
            return np.zeros(len(p), dtype=bool)
        return np.asarray(self.locus_fn(p, radius), dtype=bool)

    def in_box(self, x, margin: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = (np.asarray(b) for b in self.domain_box)
        return np.all((p - margin >= lo) & (p + margin <= hi), axis=1)

    def describe(self) -> dict:
        return {"name": self.name, "params": self.params}


def _cube(dim, half):
    return (tuple([-float(half)] * dim), tuple([float(half)] * dim))


def _check_box(f: ScalarField, x: np.ndarray, h: float):
    if not np.all(f.in_box(x, f.dim * h)):
        raise OutOfDomain(f"FD stencil of radius {f.dim * h:g} leaves the domain box")


def _hess_stencil(dim: int, h: float):
    """Offsets of the second-order stencil: centre, +-e_i, +-e_i +-e_j."""
    e = np.eye(dim) * h
    offs = [np.zeros(dim)]
    for i in range(dim):
        offs += [e[i], -e[i]]
    for i in range(dim):
        for j in range(i + 1, dim):
            offs += [e[i] + e[j], e[i] - e[j], -e[i] + e[j], -e[i] - e[j]]
    return np.array(offs)


def _hess_from_values(vals: np.ndarray, dim: int, h: float):
    """vals has shape (M, S) ordered as in :func:`_hess_stencil`."""
    m = vals.shape[0]
    f0 = vals[:, 0]
    grad = np.empty((m, dim))
    hess = np.empty((m, dim, dim))
    for i in range(dim):
        fp, fm = vals[:, 1 + 2 * i], vals[:, 2 + 2 * i]
        grad[:, i] = (fp - fm) / (2 * h)
        hess[:, i, i] = (fp - 2 * f0 + fm) / (h * h)
    pos = 1 + 2 * dim
    for i in range(dim):
        for j in range(i + 1, dim):
            pp, pm, mp, mm = (vals[:, pos + t] for t in range(4))
            hess[:, i, j] = hess[:, j, i] = (pp - pm - mp + mm) / (4 * h * h)
            pos += 4
    return grad, hess


def hessian_fd_batch(f: ScalarField, x: np.ndarray, h: float = 1e-4, check: bool = True):
    """Central-difference gradients and Hessians at many points, (M,N), (M,N,N)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if check:
        _check_box(f, x, h)
    offs = _hess_stencil(f.dim, h)
    pts = (x[:, None, :] + offs[None, :, :]).reshape(-1, f.dim)
    vals = f.eval_fn(pts).reshape(len(x), len(offs))
    grad, hess = _hess_from_values(vals, f.dim, h)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    return grad, hess


def gradient_fd(f: ScalarField, x, h: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_box(f, x, h)
    e = np.eye(f.dim) * h
    pts = np.vstack([x + e, x - e])
    vals = f.eval_fn(pts)
    return (vals[: f.dim] - vals[f.dim:]) / (2 * h)


def hessian_fd(f: ScalarField, x, h: float = 1e-4) -> np.ndarray:
    """Symmetrised 2nd-order central Hessian at a single point."""
    _, hess = hessian_fd_batch(f, np.asarray(x, dtype=float)[None, :], h)
    return hess[0]


# ---------------------------------------------------------------------------
# builtins


def builtin_example1(N: int = 3, R: float = 1.0, alpha: float = 3.0):
    """u = (R^2 - |x|^2)^alpha in the ball, 0 outside, with its forcing term."""
    if alpha <= 2:
        raise BadParam("alpha must exceed 2")
    if R <= 0:
        raise BadParam("R must be positive")
    box = _cube(N, 2.5 * R)

    def s(p):
        return np.maximum(R * R - np.sum(p * p, axis=1), 0.0)

    def u(p):
        return s(p) ** alpha

    def u_grad(p):
        return (-2 * alpha * s(p) ** (alpha - 1))[:, None] * p

    def u_hess(p):
        sp = s(p)
        a = -2 * alpha * sp ** (alpha - 1)
        b = 4 * alpha * (alpha - 1) * sp ** (alpha - 2)
        return a[:, None, None] * np.eye(N) + b[:, None, None] * p[:, :, None] * p[:, None, :]

    def f(p):
        return -2 * alpha * s(p) ** (alpha - 1)

    def f_grad(p):
        return (4 * alpha * (alpha - 1) * s(p) ** (alpha - 2))[:, None] * p

    params = {"N": N, "R": R, "alpha": alpha}
    uf = ScalarField(N, u, box, u_grad, u_hess, None, "example1_u", params)
    ff = ScalarField(N, f, box, f_grad, None, None, "example1_f", params)
    return uf, ff


def builtin_example2(N: int = 4, k: int = 2, alpha: float = 0.5):
    """u = sum_{i<=k} |x_i|^alpha and a continuous forcing term below it.

    f(x) = alpha(alpha-1) min(1, m^(alpha-2)) prod_{i<=k} min(|x_i|, 1), with
    m = max_{i<=k} |x_i|.  It vanishes exactly on the hyperplanes
    {x_i = 0}, is continuous, and lambda_k(D^2 u) <= f <= 0 wherever u is smooth.
    """
    if N < 2 * k or k < 1:
        raise BadParam("need N >= 2k and k >= 1")
    if not 0 < alpha < 1:
        raise BadParam("alpha must lie in (0, 1)")
    box = _cube(N, 2.0)
    c = alpha * (alpha - 1)

    def u(p):
        return np.sum(np.abs(p[:, :k]) ** alpha, axis=1)

    def u_grad(p):
        g = np.zeros_like(p)
        a = np.abs(p[:, :k])
        with np.errstate(divide="ignore"):
            g[:, :k] = alpha * np.sign(p[:, :k]) * a ** (alpha - 1)
        return g

    def u_hess(p):
        hs = np.zeros((len(p), N, N))
        with np.errstate(divide="ignore"):
            d = c * np.abs(p[:, :k]) ** (alpha - 2)
        idx = np.arange(k)
        hs[:, idx, idx] = d
        return hs

    def f(p):
        a = np.abs(p[:, :k])
        m = np.max(a, axis=1)
        with np.errstate(divide="ignore"):
            scale = np.where(m > 0, np.minimum(1.0, m ** (alpha - 2)), 1.0)
        return c * scale * np.prod(np.minimum(a, 1.0), axis=1)

    def locus(p, radius):
        return np.min(np.abs(p[:, :k]), axis=1) <= radius

    params = {"N": N, "k": k, "alpha": alpha}
    uf = ScalarField(N, u, box, u_grad, u_hess, locus, "example2_u", params)
    ff = ScalarField(N, f, box, None, None, locus, "example2_f", params)
    return uf, ff


def example2_lambda_k(p, k: int, alpha: float) -> np.ndarray:
    """max_i alpha(alpha-1)|x_i|^(alpha-2) over i <= k, the smooth-point value of lambda_k(D^2 u)."""
    p = np.atleast_2d(p)
    return np.max(alpha * (alpha - 1) * np.abs(p[:, :k]) ** (alpha - 2), axis=1)


def constant_field(dim: int, value: float = 0.0, half_width: float = 2.0) -> ScalarField:
    return ScalarField(dim, lambda p: np.full(len(p), float(value)), _cube(dim, half_width),
                       lambda p: np.zeros_like(p), lambda p: np.zeros((len(p), dim, dim)),
                       None, "constant", {"value": value})


def expression_field(src, dim: int, half_width: float = 2.0, box=None) -> ScalarField:
    e = src if isinstance(src, Expression) else parse_expression(src, dim)
    dom = _cube(dim, half_width) if box is None else (tuple(box[0]), tuple(box[1]))
    return ScalarField(dim, lambda p: evaluate(e, p), dom, name="expression",
                       params={"source": e.source})


def _sampled_distance(region: RegionSpec, resolution: int, margin: float):
    lo = np.asarray(region.bbox[0]) - margin
    hi = np.asarray(region.bbox[1]) + margin
    grid = GridSpec(tuple(lo), tuple(hi), resolution, 1e-9)
    pts = grid.points()
    outside = pts[~region.inside(pts)]
    if len(outside) == 0:
        raise EmptyComplement(f"{region.name}: no complement points in the enlarged box")
    try:
        rim = boundary_sample(region, grid)
    except EmptyBoundary:
        rim = np.empty((0, region.dim))
    cloud = np.vstack([outside, rim])
    tree = cKDTree(cloud)
    spacing = float(np.max(grid.spacing))

    dim = region.dim
    moves = np.vstack([np.eye(dim), -np.eye(dim)])

    def ray(q, u, length):
        # a boundary crossing on [q, q + length u], or inf when the end is inside
        end = q + u * length[:, None]
        ok = ~region.inside(end)
        a, b = q.copy(), end
        for _ in range(36):
            mid = 0.5 * (a + b)
            m_in = region.inside(mid)
            a = np.where(m_in[:, None], mid, a)
            b = np.where(m_in[:, None], b, mid)
        r = np.linalg.norm(b - q, axis=1)
        return np.where(ok, r, np.inf)

    def v(p):
        p = np.atleast_2d(p)
        inside = region.inside(p)
        out = np.zeros(len(p))
        if np.any(inside):
            q = p[inside]
            d, j = tree.query(q)
            u = cloud[j] - q
            u /= np.maximum(np.linalg.norm(u, axis=1), 1e-300)[:, None]
            length = 2 * d
            best = np.minimum(d, ray(q, u, length))
            # pattern search over ray directions; every value is an upper bound
            for step in 0.5 ** np.arange(1, 11):
                for _ in range(3):
                    improved = False
                    for m in moves:
                        w = u + step * m
                        w /= np.linalg.norm(w, axis=1)[:, None]
                        r = ray(q, w, length)
                        better = r < best - 1e-15
                        if np.any(better):
                            improved = True
                            best = np.where(better, r, best)
                            u = np.where(better[:, None], w, u)
                    if not improved:
                        break
            out[inside] = best
        return out

    return v, spacing


def distance_field(region: RegionSpec, resolution: int = 48, margin: float = 0.5,
                   exact: bool = True) -> ScalarField:
    """v(x) = dist(x, complement of U), zero outside U.

    Uses the region's closed-form distance when it has one and ``exact`` is
    set; otherwise nearest neighbours in a sampled complement plus the
    bisected boundary, refined by bisection along the nearest direction.
    """
    lo = tuple(np.asarray(region.bbox[0]) - margin)
    hi = tuple(np.asarray(region.bbox[1]) + margin)
    if exact and region.dist_to_complement is not None:
        fn = region.dist_to_complement
        spacing = 0.0
    else:
        fn, spacing = _sampled_distance(region, resolution, margin)
    sd = region.signed_dist
    locus = (lambda p, radius: np.abs(sd(p)) <= radius) if sd is not None else None
    return ScalarField(region.dim, fn, (lo, hi), locus_fn=locus, name="distance",
                       params={"region": region.describe(), "sample_spacing": spacing})


def indicator_field(region: RegionSpec, margin: float = 0.5) -> ScalarField:
    """1 on U, 0 elsewhere; lower semicontinuous since U is open."""
    lo = tuple(np.asarray(region.bbox[0]) - margin)
    hi = tuple(np.asarray(region.bbox[1]) + margin)
    sd = region.signed_dist

    def locus(p, radius):
        if sd is not None:
            return np.abs(sd(p)) <= radius
        offs = np.vstack([np.eye(region.dim), -np.eye(region.dim)]) * radius
        inn = region.inside((p[:, None, :] + offs[None]).reshape(-1, region.dim)).reshape(len(p), -1)
        here = region.inside(p)
        return np.any(inn != here[:, None], axis=1)

    return ScalarField(region.dim, lambda p: region.inside(p).astype(float), (lo, hi),
                       None, None, locus, "indicator", {"region": region.describe()})
