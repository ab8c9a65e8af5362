"""Open sets, cylinders, components, convexity and boundary curvature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from . import eigenops
from .errors import (
    BadParam,
    EmptyBoundary,
    EmptyRegion,
    NotOnBoundary,
    NotSmooth,
)
from .grid import GridSpec

Predicate = Callable[[np.ndarray], np.ndarray]
Scalar = Callable[[np.ndarray], np.ndarray]


def _pts(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Chart:
    """U = {x : x_N > height(x')} near the chart, in global coordinates."""

    height: Scalar  # (M, N-1) -> (M,)


@dataclass(frozen=True)
class RegionSpec:
    """An open set described by a vectorised membership predicate.

    ``signed_dist`` is negative inside.  ``dist_to_complement`` when present
    is the exact distance to the complement (zero outside), used by
    :func:`degenlab.fields.distance_field`.
    """

    dim: int
    inside_fn: Predicate
    bbox: Tuple[Tuple[float, ...], Tuple[float, ...]]
    signed_dist: Optional[Scalar] = None
    chart: Optional[Chart] = None
    dist_to_complement: Optional[Scalar] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # False when bbox is only a viewing window onto an unbounded set
    bounded: bool = True

    def inside(self, x) -> np.ndarray:
        p = _pts(x)
        return np.asarray(self.inside_fn(p), dtype=bool).reshape(p.shape[0])

    def defining_function(self) -> Optional[Scalar]:
        """A function negative on U and positive outside, if known."""
        if self.signed_dist is not None:
            return self.signed_dist
        if self.chart is not None:
            h = self.chart.height
            return lambda p: h(p[:, :-1]) - p[:, -1]
        return None

    def describe(self) -> dict:
        return {"name": self.name, "params": _jsonable(self.params)}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, RegionSpec):
        return v.describe()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _box_bbox(lo, hi):
    return (tuple(float(v) for v in lo), tuple(float(v) for v in hi))


def ball(dim: int = 3, radius: float = 1.0, center=None) -> RegionSpec:
    if radius <= 0:
        raise BadParam("ball radius must be positive")
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def sd(p):
        return np.linalg.norm(p - c, axis=1) - radius

    return RegionSpec(dim, lambda p: sd(p) < 0, _box_bbox(c - radius, c + radius), sd,
                      dist_to_complement=lambda p: np.maximum(-sd(p), 0.0),
                      name="ball", params={"dim": dim, "radius": radius, "center": c.tolist()})


def halfspace(dim: int = 3, normal=None, offset: float = 0.0, extent: float = 2.0) -> RegionSpec:
    """{x : <x, n> > offset}; the bounding box is [-extent, extent]^N."""
    n = np.eye(dim)[-1] if normal is None else np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)

    def sd(p):
        return offset - p @ n

    return RegionSpec(dim, lambda p: sd(p) < 0, _box_bbox([-extent] * dim, [extent] * dim), sd,
                      dist_to_complement=lambda p: np.maximum(-sd(p), 0.0),
                      name="halfspace", bounded=False,
                      params={"dim": dim, "normal": n.tolist(), "offset": offset, "extent": extent})


def slab(dim: int = 3, half_width: float = 0.5, extent: float = 2.0) -> RegionSpec:
    """{x : |x_N| < half_width}."""
    if half_width <= 0:
        raise BadParam("slab half width must be positive")

    def sd(p):
        return np.abs(p[:, -1]) - half_width

    return RegionSpec(dim, lambda p: sd(p) < 0, _box_bbox([-extent] * dim, [extent] * dim), sd,
                      dist_to_complement=lambda p: np.maximum(-sd(p), 0.0),
                      name="slab", bounded=False, params={"dim": dim, "half_width": half_width, "extent": extent})


def torus_solid(major: float = 2.0, minor: float = 0.5) -> RegionSpec:
    """Solid torus in R^3 around the x3 axis."""
    if not 0 < minor < major:
        raise BadParam("torus needs 0 < minor < major")

    def sd(p):
        rho = np.hypot(p[:, 0], p[:, 1])
        return np.hypot(rho - major, p[:, 2]) - minor

    ext = major + minor
    return RegionSpec(3, lambda p: sd(p) < 0, _box_bbox([-ext, -ext, -minor], [ext, ext, minor]), sd,
                      dist_to_complement=lambda p: np.maximum(-sd(p), 0.0),
                      name="torus_solid", params={"major": major, "minor": minor})


def union_balls(dim: int = 3, centers=None, radii=(1.0, 1.0)) -> RegionSpec:
    """Union of two overlapping balls, neither containing the other."""
    if centers is None:
        e1 = np.eye(dim)[0]
        centers = (-0.8 * e1, 0.8 * e1)
    c1, c2 = (np.asarray(c, dtype=float) for c in centers)
    r1, r2 = (float(r) for r in radii)
    d = float(np.linalg.norm(c2 - c1))
    if min(r1, r2) <= 0:
        raise BadParam("radii must be positive")
    if d >= r1 + r2:
        raise BadParam("balls are disjoint")
    if d <= abs(r1 - r2):
        raise BadParam("one ball contains the other")
    axis = (c2 - c1) / d
    s = (d * d + r1 * r1 - r2 * r2) / (2 * d)
    rim_r = math.sqrt(r1 * r1 - s * s)
    rim_c = c1 + s * axis

    def sd(p):
        return np.minimum(np.linalg.norm(p - c1, axis=1) - r1, np.linalg.norm(p - c2, axis=1) - r2)

    def dist_rim(p):
        q = p - rim_c
        par = q @ axis
        perp = np.linalg.norm(q - par[:, None] * axis, axis=1)
        return np.hypot(perp - rim_r, par)

    def dist_cap(p, ci, ri, cj, rj):
        v = p - ci
        nv = np.linalg.norm(v, axis=1)
        safe = np.where(nv > 0, nv, 1.0)
        proj = ci + ri * v / safe[:, None]
        proj = np.where((nv > 0)[:, None], proj, ci + ri * axis)
        free = np.linalg.norm(proj - cj, axis=1) >= rj
        return np.where(free, np.abs(nv - ri), dist_rim(p))

    def dist_to_complement(p):
        inside = sd(p) < 0
        d1 = dist_cap(p, c1, r1, c2, r2)
        d2 = dist_cap(p, c2, r2, c1, r1)
        return np.where(inside, np.minimum(d1, d2), 0.0)

    lo = np.minimum(c1 - r1, c2 - r2)
    hi = np.maximum(c1 + r1, c2 + r2)
    return RegionSpec(dim, lambda p: sd(p) < 0, _box_bbox(lo, hi), sd,
                      dist_to_complement=dist_to_complement, name="union_balls",
                      params={"dim": dim, "centers": [c1.tolist(), c2.tolist()], "radii": [r1, r2]})


def l_shape(dim: int = 3, size: float = 1.0) -> RegionSpec:
    """(-size, size)^N with the closed quadrant {x1 >= 0, x2 >= 0} removed."""
    if dim < 2 or size <= 0:
        raise BadParam("l_shape needs dim >= 2 and size > 0")

    def dist_quadrant(p):
        return np.hypot(np.maximum(-p[:, 0], 0.0), np.maximum(-p[:, 1], 0.0))

    def inside(p):
        in_box = np.all(np.abs(p) < size, axis=1)
        return in_box & ((p[:, 0] < 0) | (p[:, 1] < 0))

    def dist_to_complement(p):
        d = np.minimum(np.min(size - np.abs(p), axis=1), dist_quadrant(p))
        return np.where(inside(p), d, 0.0)

    def sd(p):
        outside_box = np.max(np.abs(p) - size, axis=1)
        in_quadrant = np.minimum(p[:, 0], p[:, 1])
        d = np.maximum(outside_box, in_quadrant)
        return np.where(inside(p), -dist_to_complement(p), np.maximum(d, 0.0))

    return RegionSpec(dim, inside, _box_bbox([-size] * dim, [size] * dim), sd,
                      dist_to_complement=dist_to_complement, name="l_shape",
                      params={"dim": dim, "size": size})


def box(lo, hi) -> RegionSpec:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise BadParam("empty box")

    def sd(p):
        return np.max(np.maximum(lo - p, p - hi), axis=1)

    return RegionSpec(len(lo), lambda p: sd(p) < 0, _box_bbox(lo, hi), sd,
                      dist_to_complement=lambda p: np.maximum(-sd(p), 0.0),
                      name="box", params={"lo": lo.tolist(), "hi": hi.tolist()})


def graph_epigraph(height, dim: int, extent: float = 1.0, source: Optional[str] = None) -> RegionSpec:
    """{x : x_N > height(x1..x_{N-1})}; ``height`` is vectorised over (M, N-1)."""
    chart = Chart(height)

    def g(p):
        return height(p[:, :-1]) - p[:, -1]

    return RegionSpec(dim, lambda p: g(p) < 0, _box_bbox([-extent] * dim, [extent] * dim),
                      None, chart, name="graph_epigraph", bounded=False,
                      params={"dim": dim, "height": source, "extent": extent})


def complement(inner: RegionSpec, margin: float = 1.0) -> RegionSpec:
    """Open complement of the closure of ``inner`` (membership-level)."""
    sd_in = inner.signed_dist

    def inside(p):
        if sd_in is not None:
            return sd_in(p) > 0
        return ~inner.inside(p)

    lo = np.asarray(inner.bbox[0]) - margin
    hi = np.asarray(inner.bbox[1]) + margin
    sd = (lambda p: -sd_in(p)) if sd_in is not None else None
    dist = (lambda p: np.maximum(sd_in(p), 0.0)) if sd_in is not None and inner.name in ("ball", "halfspace", "slab", "torus_solid") else None
    return RegionSpec(inner.dim, inside, _box_bbox(lo, hi), sd, dist_to_complement=dist,
                      name="complement", bounded=False, params={"inner": inner.describe(), "margin": margin})


def from_signed_distance(fn: Scalar, dim: int, lo, hi, source: Optional[str] = None) -> RegionSpec:
    return RegionSpec(dim, lambda p: fn(p) < 0, _box_bbox(lo, hi), fn, name="expression", bounded=False,
                      params={"signed_dist": source, "lo": list(lo), "hi": list(hi)})


def from_field(u: Scalar, dim: int, lo, hi, threshold: float = 1e-9, name: str = "positivity_set") -> RegionSpec:
    """The open set {u > threshold}."""
    return RegionSpec(dim, lambda p: u(p) > threshold, _box_bbox(lo, hi), name=name,
                      params={"threshold": threshold})


def rigid(region: RegionSpec, rotation, shift) -> RegionSpec:
    """Image of ``region`` under x -> Q x + z."""
    q = np.asarray(rotation, dtype=float)
    z = np.asarray(shift, dtype=float)

    def back(p):
        return (p - z) @ q  # Q^T (p - z), row form

    sd = region.signed_dist
    dist = region.dist_to_complement
    lo, hi = (np.asarray(b) for b in region.bbox)
    corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(region.dim, -1).T
    img = corners @ q.T + z
    return RegionSpec(region.dim, lambda p: region.inside(back(p)),
                      _box_bbox(img.min(axis=0), img.max(axis=0)),
                      (lambda p: sd(back(p))) if sd is not None else None,
                      None,
                      (lambda p: dist(back(p))) if dist is not None else None,
                      name=f"rigid({region.name})",
                      params={"base": region.describe(), "rotation": q.tolist(), "shift": z.tolist()},
                      bounded=region.bounded)


BUILTIN_REGIONS = {
    "ball": ball,
    "halfspace": halfspace,
    "slab": slab,
    "torus_solid": torus_solid,
    "union_balls": union_balls,
    "l_shape": l_shape,
    "box": box,
    "graph_epigraph": None,  # needs an expression, see builtin_region
    "complement": None,
}


def builtin_region(name: str, **params) -> RegionSpec:
    """Construct a catalog region by name.

    ``graph_epigraph`` takes ``height`` (expression text over x1..x_{N-1})
    and ``dim``; ``complement`` takes ``inner`` (a dict ``{name, params}``).
    """
    if name == "graph_epigraph":
        from .expr import evaluate, parse_expression

        dim = int(params.pop("dim"))
        src = params.pop("height")
        e = parse_expression(src, dim - 1)
        return graph_epigraph(lambda q: evaluate(e, q), dim, source=src, **params)
    if name == "complement":
        inner = params.pop("inner")
        if isinstance(inner, dict):
            inner = builtin_region(inner["name"], **dict(inner.get("params", {})))
        return complement(inner, **params)
    ctor = BUILTIN_REGIONS.get(name)
    if ctor is None:
        raise BadParam(f"unknown region {name!r}")
    try:
        return ctor(**params)
    except TypeError as exc:
        raise BadParam(str(exc)) from exc


# ---------------------------------------------------------------------------
# cylinders


@dataclass(frozen=True)
class Cylinder:
    """z + O (closed a-ball in R^k x closed b-ball in R^(N-k))."""

    split_k: int
    a: float
    b: float
    center: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        n = len(self.center)
        if not 1 <= self.split_k < n:
            raise BadParam("split_k must satisfy 1 <= k < N")
        if self.a <= 0 or self.b <= 0:
            raise BadParam("cylinder radii must be positive")
        o = np.asarray(self.frame, dtype=float)
        if o.shape != (n, n) or np.max(np.abs(o.T @ o - np.eye(n))) > 1e-12:
            raise BadParam("frame must be orthogonal")

    @property
    def dim(self) -> int:
        return len(self.center)

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return np.asarray(self.center) + local @ np.asarray(self.frame).T

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        return (pts - np.asarray(self.center)) @ np.asarray(self.frame)

    def translated(self, shift) -> "Cylinder":
        return Cylinder(self.split_k, self.a, self.b, np.asarray(self.center) + shift, self.frame)

    def to_dict(self) -> dict:
        return {"split_k": self.split_k, "a": float(self.a), "b": float(self.b),
                "center": np.asarray(self.center).tolist(),
                "frame": np.asarray(self.frame).tolist()}


def _ball_factor(dim: int, density: int):
    """(sphere points, open-ball points) of the unit ball in R^dim.

    Both sets are nested under multiplying ``density`` by an integer.
    """
    n = int(density)
    if dim == 1:
        sphere = np.array([[-1.0], [1.0]])
        inner = (np.arange(-(n - 1), n) / n)[:, None]
        return sphere, inner
    ticks = np.arange(-n, n + 1)
    mesh = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), -1).reshape(-1, dim)
    r2 = np.sum(mesh * mesh, axis=1)
    inner = mesh[r2 < n * n] / n
    surface = mesh[np.max(np.abs(mesh), axis=1) == n].astype(float)
    sphere = surface / np.linalg.norm(surface, axis=1)[:, None]
    return sphere, inner


def cylinder_local_parts(k: int, m: int, a: float, b: float, density: int):
    """Local-coordinate samples keyed by part: lateral, interior, caps."""
    s1, i1 = _ball_factor(k, density)
    s2, i2 = _ball_factor(m, density)
    s1, i1 = s1 * a, i1 * a
    s2, i2 = s2 * b, i2 * b
    closed2 = np.vstack([s2, i2])

    def prod(u, v):
        return np.hstack([np.repeat(u, len(v), axis=0), np.tile(v, (len(u), 1))])

    return {"lateral": prod(s1, closed2), "interior": prod(i1, i2), "caps": prod(i1, s2)}


def cylinder_points(c: Cylinder, part: str = "closure", density: int = 8) -> np.ndarray:
    """Deterministic samples of a cylinder part: interior, lateral, caps or closure."""
    if density < 2:
        raise BadParam("density must be >= 2")
    parts = cylinder_local_parts(c.split_k, c.dim - c.split_k, c.a, c.b, density)
    if part == "closure":
        local = np.vstack([parts["lateral"], parts["interior"], parts["caps"]])
    elif part in parts:
        local = parts[part]
    else:
        raise BadParam(f"unknown cylinder part {part!r}")
    return c.to_world(local)


# ---------------------------------------------------------------------------
# grid topology


def connected_components(region: RegionSpec, grid: GridSpec) -> List[np.ndarray]:
    """Face-adjacent flood fill of inside grid points.

    Components are sorted by size (descending), ties broken by the
    lexicographically smallest point.
    """
    if grid.resolution < 8:
        raise BadParam("connected_components needs resolution >= 8")
    pts = grid.points()
    mask = region.inside(pts).reshape(grid.shape)
    structure = ndimage.generate_binary_structure(grid.dim, 1)
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        raise EmptyRegion(f"{region.name} has no grid points inside")
    flat = labels.ravel()
    comps = [pts[flat == lab] for lab in range(1, count + 1)]
    comps.sort(key=lambda c: (-len(c), tuple(c[0])))
    return comps


@dataclass(frozen=True)
class ConvexityResult:
    convex: bool
    witness: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None
    trials: int = 0

    def to_dict(self) -> dict:
        d = {"convex": self.convex, "trials": self.trials}
        if self.witness is not None:
            d["witness"] = {k: np.asarray(v).tolist() for k, v in zip(("x", "y", "outside"), self.witness)}
        return d


def _segment_scan(region, x, y, count):
    t = np.linspace(0.0, 1.0, count)
    seg = x[None, :] * (1 - t)[:, None] + y[None, :] * t[:, None]
    bad = ~region.inside(seg)
    return seg[bad]


def is_component_convex(points: np.ndarray, region: RegionSpec, trials: int = 2000,
                        rng: Optional[np.random.Generator] = None,
                        spacing: Optional[float] = None) -> ConvexityResult:
    """Sample point pairs of a component and test their segments for membership."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise EmptyRegion("empty component")
    rng = rng if rng is not None else np.random.default_rng(0)
    if spacing is None:
        ext = points.max(axis=0) - points.min(axis=0)
        spacing = max(float(ext.max()) / 32.0, 1e-6)
    if len(points) == 1:
        return ConvexityResult(True, None, 0)
    for trial in range(trials):
        i, j = rng.integers(0, len(points), size=2)
        x, y = points[i], points[j]
        length = float(np.linalg.norm(y - x))
        if length == 0:
            continue
        count = int(math.ceil(2 * length / spacing)) + 1
        bad = _segment_scan(region, x, y, count)
        if len(bad) == 0:
            continue
        # the 4x scan contains every coarse sample, so it must see the gap too
        refined = _segment_scan(region, x, y, 4 * (count - 1) + 1)
        if len(refined):
            return ConvexityResult(False, (x, y, refined[0]), trial + 1)
    return ConvexityResult(True, None, trials)


def boundary_sample(region: RegionSpec, grid: GridSpec, tol: float = 1e-12) -> np.ndarray:
    """Points of the boundary found by bisection on grid edges with a sign change."""
    pts = grid.points()
    shape = grid.shape
    mask = region.inside(pts).reshape(shape)
    grid_pts = pts.reshape(shape + (grid.dim,))
    found = []
    for axis in range(grid.dim):
        lo_idx = [slice(None)] * grid.dim
        hi_idx = [slice(None)] * grid.dim
        lo_idx[axis] = slice(0, -1)
        hi_idx[axis] = slice(1, None)
        m0 = mask[tuple(lo_idx)]
        m1 = mask[tuple(hi_idx)]
        change = m0 != m1
        if not np.any(change):
            continue
        a = grid_pts[tuple(lo_idx)][change]
        b = grid_pts[tuple(hi_idx)][change]
        ina = m0[change]
        # orient so that a is inside
        a, b = np.where(ina[:, None], a, b), np.where(ina[:, None], b, a)
        found.append(_bisect(region, a, b, tol))
    if not found:
        raise EmptyBoundary(f"no boundary crossings of {region.name} on the grid")
    return np.vstack(found)


def _bisect(region, a, b, tol):
    """Bisection between inside points a and outside points b."""
    a = a.copy()
    b = b.copy()
    length = np.max(np.linalg.norm(b - a, axis=1))
    iters = int(math.ceil(math.log2(max(length, tol) / tol))) + 1
    for _ in range(min(iters, 80)):
        mid = 0.5 * (a + b)
        inn = region.inside(mid)
        a = np.where(inn[:, None], mid, a)
        b = np.where(inn[:, None], b, mid)
    # report the outside end: it lies on the closed complement, within tol of the boundary
    return b


# ---------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class PrincipalCurvatures:
    point: np.ndarray
    kappas: np.ndarray  # nondecreasing, length N-1
    frame: np.ndarray  # (N, N-1) tangent directions matching kappas
    inward_normal: np.ndarray


def _fd_grad_hess(g: Scalar, x: np.ndarray, h: float):
    n = len(x)
    e = np.eye(n) * h
    stencil = [x]
    for i in range(n):
        stencil += [x + e[i], x - e[i]]
    for i in range(n):
        for j in range(i + 1, n):
            stencil += [x + e[i] + e[j], x + e[i] - e[j], x - e[i] + e[j], x - e[i] - e[j]]
    vals = g(np.array(stencil))
    f0 = vals[0]
    grad = np.empty(n)
    hess = np.empty((n, n))
    for i in range(n):
        fp, fm = vals[1 + 2 * i], vals[2 + 2 * i]
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / (h * h)
    pos = 1 + 2 * n
    for i in range(n):
        for j in range(i + 1, n):
            pp, pm, mp, mm = vals[pos:pos + 4]
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4 * h * h)
            pos += 4
    return f0, grad, hess


def tangent_basis(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the plane orthogonal to ``normal``."""
    n = len(normal)
    q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    return q[:, 1:n]


def principal_curvatures(region: RegionSpec, x, h: float = 1e-3,
                         boundary_tol: float = 1e-6, smooth_tol: float = 1e-3) -> PrincipalCurvatures:
    """Principal curvatures at a boundary point, positive for a ball.

    With g a defining function (g < 0 on U) the curvatures are the
    eigenvalues of the tangential block of D^2 g / |Dg|.  After rotating the
    inward normal -Dg/|Dg| onto e_N this tangential block is exactly D^2 f(0)
    for the local graph U = {x_N > f(x')}.  Derivatives use Richardson
    extrapolation of the h and 2h central stencils.
    """
    g = region.defining_function()
    if g is None:
        raise NotSmooth(f"{region.name}: curvature needs a signed distance or chart")
    x = np.asarray(x, dtype=float)
    f0, grad, hess = _fd_grad_hess(g, x, h)
    gnorm = float(np.linalg.norm(grad))
    if gnorm == 0 or not np.isfinite(gnorm):
        if abs(f0) > boundary_tol:
            raise NotOnBoundary(f"defining function is {f0:.3g} at the point")
        raise NotSmooth("degenerate gradient of the defining function")
    if abs(f0) / gnorm > boundary_tol:
        raise NotOnBoundary(f"point is {abs(f0) / gnorm:.3g} away from the boundary")
    _, grad2, hess2 = _fd_grad_hess(g, x, 2 * h)
    scale = 1.0 + np.max(np.abs(hess))
    if np.max(np.abs(hess2 - hess)) > smooth_tol * scale or np.linalg.norm(grad2 - grad) > smooth_tol * gnorm:
        raise NotSmooth("finite-difference curvature is step dependent")
    grad = (4 * grad - grad2) / 3
    hess = (4 * hess - hess2) / 3
    gnorm = float(np.linalg.norm(grad))
    normal = grad / gnorm
    t = tangent_basis(normal)
    shape_op = t.T @ hess @ t / gnorm
    shape_op = 0.5 * (shape_op + shape_op.T)
    if t.shape[1] == 1:
        return PrincipalCurvatures(x, np.array([shape_op[0, 0]]), t, -normal)
    dec = eigenops.eigenvalues_sorted(shape_op)
    return PrincipalCurvatures(x, dec.values, t @ dec.vectors, -normal)


def intersection(a: RegionSpec, b: RegionSpec) -> RegionSpec:
    """A ∩ B, with the max of signed distances when both are known."""
    if a.dim != b.dim:
        raise BadParam("dimension mismatch")
    lo = np.maximum(a.bbox[0], b.bbox[0])
    hi = np.minimum(a.bbox[1], b.bbox[1])
    if np.any(hi <= lo):
        raise EmptyRegion("regions do not overlap")
    sd = None
    if a.signed_dist is not None and b.signed_dist is not None:
        sa, sb = a.signed_dist, b.signed_dist
        sd = lambda p: np.maximum(sa(p), sb(p))  # noqa: E731
    return RegionSpec(a.dim, lambda p: a.inside(p) & b.inside(p), _box_bbox(lo, hi), sd,
                      name=f"{a.name}&{b.name}", params={"a": a.describe(), "b": b.describe()},
                      bounded=a.bounded or b.bounded)
