"""Sampling-based checks of supersolution and geometric conditions.

Every verdict is relative to the samples drawn.  A ``ViolationWitness`` is
always re-verified on a denser sample before it is reported; the absence of
a witness is reported as ``ConsistentUpToSampling``, never as a proof.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import eigenops
from .eigenops import OperatorSpec, operator_eval
from .errors import (
    BadForcing,
    BadNesting,
    BadParam,
    DegenLabError,
    EmptyBoundary,
    NotNonnegative,
    OperatorUnavailable,
)
from .fields import ScalarField, hessian_fd_batch
from .grid import GridSpec
from .regions import (
    Cylinder,
    RegionSpec,
    boundary_sample,
    box,
    connected_components,
    cylinder_local_parts,
    is_component_convex,
    principal_curvatures,
    tangent_basis,
)

CONSISTENT = "ConsistentUpToSampling"
VIOLATION = "ViolationWitness"
CERTIFICATE = "CertificateFound"


@dataclass
class CheckConfig:
    """Tolerances and budgets shared by all checks."""

    seed: int = 0
    tol_analytic: float = 1e-6
    tol_fd: float = 1e-4
    fd_step: float = 1e-4
    consistency_tol: float = 1e-4
    probe_radius: Optional[float] = None
    probe_budget: int = 64
    probe_lattice: int = 4000
    g_budget: int = 160
    g_resolution: int = 40
    omega_margin: float = 0.5
    cylinder_random: int = 100_000
    cylinder_sweeps: int = 1000
    cylinder_density: int = 8
    radius_range: Tuple[float, float] = (0.02, 0.5)
    random_frames: int = 8
    eps_schedule: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    zero_tol: float = 1e-9
    pos_tol: float = 1e-9
    isolation_radius: Optional[float] = None
    smp_random_frames: int = 64
    smp_radii: int = 16
    smp_points: int = 60_000
    smp_gamma_cap: int = 64
    curvature_tol: float = 1e-6

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([int(self.seed) & (2**64 - 1), salt])

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["radius_range"] = list(self.radius_range)
        d["eps_schedule"] = list(self.eps_schedule)
        return d


@dataclass
class CheckReport:
    check: str
    verdict: str
    seed: int
    witness: Optional[dict] = None
    stats: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    rows: Optional[dict] = None  # CSV payload: {"header": [...], "data": [[...], ...]}
    children: List["CheckReport"] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict != VIOLATION

    def to_dict(self) -> dict:
        d = {"check": self.check, "verdict": self.verdict, "seed": int(self.seed),
             "witness": _clean(self.witness), "stats": _clean(self.stats),
             "residuals": _clean(self.residuals)}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d


def _clean(v):
    """Convert numpy containers and scalars into plain JSON values."""
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if hasattr(v, "to_dict"):
        return _clean(v.to_dict())
    return str(v)


@dataclass(frozen=True)
class ProbeQuadratic:
    """phi(y) = c + p.(y - base) + (y - base)^T X (y - base) / 2."""

    base: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    touch_radius: float
    margin: float
    validated: bool = False

    def __call__(self, y):
        d = np.atleast_2d(y) - self.base
        return self.value + d @ self.gradient + 0.5 * np.einsum("mi,ij,mj->m", d, self.hessian, d)

    def to_dict(self) -> dict:
        return {"base": self.base, "value": self.value, "gradient": self.gradient,
                "hessian": self.hessian, "touch_radius": self.touch_radius,
                "margin": self.margin, "validated": self.validated}


# ---------------------------------------------------------------------------
# quadratic probe engine


def ball_lattice(dim: int, radius: float, n: int) -> np.ndarray:
    """Offsets of the cubic lattice with n steps per radius, clipped to the closed ball."""
    ticks = np.arange(-n, n + 1)
    mesh = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), -1).reshape(-1, dim)
    keep = np.sum(mesh * mesh, axis=1) <= n * n
    return mesh[keep] * (radius / n)


def lattice_steps(dim: int, target: int) -> int:
    """Steps per radius so that the lattice cube has about ``target`` points."""
    return max(3, int(round(target ** (1.0 / dim) / 2)))


def operator_frames(dim: int, rng: np.random.Generator, extra: Sequence[np.ndarray] = (),
                    n_random: int = 8) -> List[np.ndarray]:
    """Orthogonal frames: identity permutations, 45 degree plane rotations, extras, random."""
    frames = []
    for perm in itertools.permutations(range(dim)):
        frames.append(np.eye(dim)[:, list(perm)])
        if len(frames) >= 24:
            break
    c = math.sqrt(0.5)
    for i, j in itertools.combinations(range(dim), 2):
        for sgn in (1.0, -1.0):
            q = np.eye(dim)
            q[i, i], q[i, j], q[j, i], q[j, j] = c, -sgn * c, sgn * c, c
            frames.append(q)
    frames.extend(extra)
    if n_random:
        frames.extend(eigenops.random_orthogonal(rng, dim, n_random))
    return frames


def _projector(cols: np.ndarray) -> np.ndarray:
    return cols @ cols.T if cols.size else np.zeros((cols.shape[0], cols.shape[0]))


def hessian_templates(op: OperatorSpec, dim: int, directions: Sequence[np.ndarray],
                      frames: Sequence[np.ndarray], s: float = 1.0,
                      big: Sequence[float] = (10.0, 100.0)) -> np.ndarray:
    """Symmetric matrices with operator value > 0 built from degenerate directions.

    Each template is s * P_V - M * P_W with W spanned by ``j`` negative
    directions; W is either a single entry of ``directions`` (taking the
    rest of a frame containing it) or the trailing columns of a frame.
    """
    need = _negative_count(op, dim)
    mats = []
    for j in sorted(set(need)):
        if j == 0:
            mats.append(s * np.eye(dim))
            continue
        subspaces = []
        if j == 1:
            subspaces.extend(d[:, None] / np.linalg.norm(d) for d in directions)
        for q in frames:
            for cols in itertools.combinations(range(dim), j):
                subspaces.append(q[:, list(cols)])
        for w in subspaces:
            pw = _projector(w)
            for m in _negative_scales(op, j, s, big):
                mats.append(s * (np.eye(dim) - pw) - m * pw)
    mats = np.array(mats)
    vals = np.array([_op_value(op, x) for x in mats])
    keep = vals > 1e-3 * s
    # deduplicate
    out, seen = [], set()
    for x in mats[keep]:
        key = tuple(np.round(x, 9).ravel())
        if key not in seen:
            seen.add(key)
            out.append(x)
    if not out:
        raise OperatorUnavailable(f"no positive probe templates for {op.label}")
    return np.array(out)


def _negative_count(op: OperatorSpec, dim: int) -> List[int]:
    if op.kind == eigenops.LAMBDA_K:
        return [op.k - 1]
    if op.kind == eigenops.PMINUS_K:
        return list(range(op.k))
    if op.kind == eigenops.PPLUS_K:
        return [dim - 1]
    return list(range(dim))


def _negative_scales(op: OperatorSpec, j: int, s: float, big: Sequence[float]):
    if op.kind == eigenops.LAMBDA_K:
        return [b * s for b in big]
    if op.kind == eigenops.PMINUS_K:
        return [s * (op.k - j) / (2.0 * j)]
    if op.kind == eigenops.PPLUS_K:
        return [s / (2.0 * max(op.k - 1, 1))] if op.k > 1 else [b * s for b in big]
    return [0.5 * s] + [b * s for b in big]


def _op_value(op: OperatorSpec, x: np.ndarray) -> float:
    return float(operator_eval(op, x))


@dataclass
class ProbeHit:
    point: np.ndarray
    quadratic: ProbeQuadratic
    op_value: float
    forcing: float
    shell_gap: float


def probe_point(center: np.ndarray, radius: float, offsets: np.ndarray, weights: np.ndarray,
                templates: np.ndarray, gradients: np.ndarray, op_values: np.ndarray,
                forcing: np.ndarray, tol: float, spacing: float,
                pos_part: Optional[np.ndarray] = None):
    """Search for a quadratic q with w - q minimised strictly inside the ball.

    ``weights`` holds w at ``center + offsets`` (np.inf where unconstrained).
    Returns (template index, gradient index, sample index, gap) of the first
    admissible pair with op value > forcing + tol, or None.  ``pos_part``
    holds per template the Hessian with its very negative block removed,
    used for the Lipschitz bound that sizes the shell gap.
    """
    finite = np.isfinite(weights)
    if not np.any(finite):
        return None
    off = offsets[finite]
    w = weights[finite]
    frc = forcing[finite]
    dist = np.linalg.norm(off, axis=1)
    inner = dist <= 0.5 * radius
    shell = dist >= 0.75 * radius
    if not np.any(inner):
        return None
    quad = 0.5 * np.einsum("si,tij,sj->ts", off, templates, off)  # (T, S)
    lin = gradients @ off.T  # (P, S)
    pos = templates if pos_part is None else pos_part
    hnorm = np.array([np.max(np.abs(np.linalg.eigvalsh(x))) for x in pos])
    gnorm = np.linalg.norm(gradients, axis=1)
    root_n = math.sqrt(offsets.shape[1])
    for t in range(len(templates)):
        d = w[None, :] - lin - quad[t][None, :]  # (P, S)
        j = np.argmin(d, axis=1)
        dmin = d[np.arange(len(gradients)), j]
        ok = inner[j]
        if not np.any(ok):
            continue
        if np.any(shell):
            shell_min = np.min(d[:, shell], axis=1)
        else:
            shell_min = np.full(len(gradients), np.inf)
        lip = gnorm + hnorm[t] * radius
        gap = lip * spacing * root_n
        good = ok & (shell_min - dmin >= gap)
        for p in np.flatnonzero(good):
            near = d[p] <= dmin[p] + gap[p]
            f_sup = float(np.max(frc[near]))
            if op_values[t] > f_sup + tol:
                idx = np.flatnonzero(finite)[j[p]]
                return t, int(p), int(idx), float(shell_min[p] - dmin[p])
    return None


def _lipschitz_estimate(values: np.ndarray, offsets: np.ndarray, center_value: float) -> float:
    dist = np.linalg.norm(offsets, axis=1)
    mask = (dist > 0) & np.isfinite(values)
    if not np.any(mask):
        return 1.0
    lip = float(np.max(np.abs(values[mask] - center_value) / dist[mask]))
    return lip if lip > 0 else 1.0


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else None


def _direction_pool(dim: int, normal: Optional[np.ndarray], n_tangent: int = 8) -> List[np.ndarray]:
    """Axes, 45 degree diagonals and tangent directions of ``normal``."""
    dirs = [e for e in np.eye(dim)]
    for i, j in itertools.combinations(range(dim), 2):
        for sgn in (1.0, -1.0):
            v = np.zeros(dim)
            v[i], v[j] = 1.0, sgn
            dirs.append(v / math.sqrt(2))
    if normal is not None and dim >= 2:
        t = tangent_basis(normal)
        if t.shape[1] == 1:
            dirs.append(t[:, 0])
        else:
            for ang in np.arange(n_tangent) * math.pi / n_tangent:
                dirs.append(math.cos(ang) * t[:, 0] + math.sin(ang) * t[:, 1])
    return dirs


def _gradient_pool(dim: int, directions: Sequence[np.ndarray], magnitudes: Sequence[float],
                   zero: bool = True) -> np.ndarray:
    grads = [np.zeros(dim)] if zero else []
    for d in directions:
        u = _unit(np.asarray(d, dtype=float))
        if u is None:
            continue
        for m in magnitudes:
            grads.append(m * u)
    return np.array(grads)


def _positive_part(templates: np.ndarray) -> np.ndarray:
    """Templates with their negative eigen-directions zeroed (for gap sizing)."""
    vals, vecs = np.linalg.eigh(templates)
    vals = np.maximum(vals, 0.0)
    return np.einsum("tij,tj,tkj->tik", vecs, vals, vecs)


def _frame_from_normal(normal: Optional[np.ndarray], dim: int) -> List[np.ndarray]:
    if normal is None:
        return []
    return [np.column_stack([tangent_basis(normal), normal])]


def _probe_search(center, radius, n, weight_fn, forcing_fn, op, templates_for, gradients,
                  tol, verify: bool = True):
    """Run the probe at lattice density n and re-verify a hit at 4n."""
    offsets = ball_lattice(len(center), radius, n)
    w = weight_fn(center + offsets)
    frc = forcing_fn(center + offsets)
    templates = templates_for
    vals = np.array([_op_value(op, x) for x in templates])
    pos = _positive_part(templates)
    hit = probe_point(center, radius, offsets, w, templates, gradients, vals, frc, tol,
                      radius / n, pos)
    if hit is None:
        return None
    t, p, idx, gap = hit
    if verify:
        dense = ball_lattice(len(center), radius, 4 * n)
        w4 = weight_fn(center + dense)
        f4 = forcing_fn(center + dense)
        hit4 = probe_point(center, radius, dense, w4, templates[t:t + 1], gradients[p:p + 1],
                           vals[t:t + 1], f4, tol, radius / (4 * n), pos[t:t + 1])
        if hit4 is None:
            return None
        _, _, idx4, gap4 = hit4
        point = center + dense[idx4]
        value = float(w4[idx4])
        gap = gap4
    else:
        point = center + offsets[idx]
        value = float(w[idx])
    x = templates[t]
    # phi expressed around the touching point: phi(y) = q(y) + const, shifted to touch there
    grad_at = gradients[p] + x @ (point - center)
    quad = ProbeQuadratic(point, value, grad_at, x, radius, gap, validated=verify)
    return ProbeHit(point, quad, float(vals[t]), float(forcing_fn(point[None, :])[0]), gap)


# ---------------------------------------------------------------------------
# viscosity supersolution check


def _require_scope(op: OperatorSpec, dim: int) -> bool:
    """True if the operator is inside the degenerate range used by the theory."""
    if op.kind in (eigenops.LAMBDA_K, eigenops.PMINUS_K, eigenops.PPLUS_K):
        if not 1 <= op.k <= dim:
            raise BadParam(f"k={op.k} out of range for N={dim}")
        return op.k < dim
    return True


def _grid_points_in_box(u: ScalarField, grid: GridSpec, margin: float) -> np.ndarray:
    pts = grid.points()
    return pts[u.in_box(pts, margin)]


def _inf_convolution_residual(u, f, op, x, eps, h, cloud_n):
    """Operator residual of the inf-convolution u_eps at x (diagnostic only)."""
    dim = u.dim
    urange = 1.0
    rad = 10.0 * math.sqrt(eps * urange)
    cloud = ball_lattice(dim, rad, cloud_n)
    stencil = np.array([np.zeros(dim)] + [s * e for e in np.eye(dim) for s in (1, -1)]
                       + [a * np.eye(dim)[i] + b * np.eye(dim)[j]
                          for i, j in itertools.combinations(range(dim), 2)
                          for a, b in ((1, 1), (1, -1), (-1, 1), (-1, -1))]) * h
    ys = x[None, None, :] + stencil[:, None, :] + cloud[None, :, :]
    flat = ys.reshape(-1, dim)
    ok = u.in_box(flat)
    vals = np.full(len(flat), np.inf)
    vals[ok] = u.eval_fn(flat[ok])
    vals = vals.reshape(len(stencil), len(cloud))
    pen = np.sum(cloud * cloud, axis=1) / (2 * eps)
    ueps = np.min(vals + pen[None, :], axis=1)
    if not np.all(np.isfinite(ueps)):
        return None
    from .fields import _hess_from_values

    _, hess = _hess_from_values(ueps[None, :], dim, h)
    hess = 0.5 * (hess[0] + hess[0].T)
    fpts = x[None, :] + cloud
    fpts = fpts[f.in_box(fpts)]
    f_sup = float(np.max(f.eval_fn(fpts))) if len(fpts) else float(f.eval_fn(x[None, :])[0])
    return _op_value(op, hess) - f_sup


def check_viscosity_supersolution(u: ScalarField, op: OperatorSpec, f: ScalarField,
                                  grid: GridSpec, cfg: Optional[CheckConfig] = None,
                                  region_mask=None) -> CheckReport:
    """Check F(D^2 u) <= f in the viscosity sense on a grid.

    Smooth grid points use the Hessian directly.  Points flagged as
    nonsmooth (known locus, or step-dependent finite differences) are probed
    with quadratics touching u from below.  ``region_mask`` optionally
    restricts the evaluated grid points.
    """
    cfg = cfg or CheckConfig()
    if u.dim != grid.dim or f.dim != grid.dim:
        raise BadParam("field and grid dimensions differ")
    in_scope = _require_scope(op, u.dim)
    h = cfg.fd_step
    if h >= float(np.min(grid.spacing)):
        from .errors import GridTooCoarse

        raise GridTooCoarse("fd_step must be below the grid spacing")
    dim = u.dim
    pts = _grid_points_in_box(u, grid, 2 * dim * h)
    if region_mask is not None:
        pts = pts[np.asarray(region_mask(pts), dtype=bool)]
    if len(pts) == 0:
        raise BadParam("no grid points inside the field domain")

    grad1, hess1 = hessian_fd_batch(u, pts, h, check=False)
    _, hess2 = hessian_fd_batch(u, pts, 2 * h, check=False)
    scale = 1.0 + np.max(np.abs(hess1), axis=(1, 2))
    inconsistent = np.max(np.abs(hess1 - hess2), axis=(1, 2)) > cfg.consistency_tol * scale
    inconsistent |= ~np.all(np.isfinite(hess1), axis=(1, 2))
    locus_radius = 0.5 * float(np.linalg.norm(grid.spacing))
    flagged = inconsistent | u.nonsmooth_near(pts, locus_radius)
    fvals = f.eval_fn(pts)

    fd_vals = np.full(len(pts), np.nan)
    fd_vals[~flagged] = _eval_ops(op, hess1[~flagged])
    fd_res = fd_vals - fvals
    if u.hess_fn is not None:
        an_vals = np.full(len(pts), np.nan)
        sm = ~flagged
        if np.any(sm):
            an_vals[sm] = _eval_ops(op, u.hess_fn(pts[sm]))
        res = an_vals - fvals
        tol = cfg.tol_analytic
    else:
        res = fd_res
        tol = cfg.tol_fd

    stats = {"grid_points": int(len(pts)), "smooth_points": int(np.sum(~flagged)),
             "flagged_points": int(np.sum(flagged)), "fd_inconsistent": int(np.sum(inconsistent)),
             "tolerance": tol, "in_scope": bool(in_scope), "operator": op.label}
    residuals = {
        "max_residual": _nanmax(res),
        "max_abs_residual": _nanmax(np.abs(res)),
        "max_fd_residual": _nanmax(fd_res),
        "max_abs_fd_residual": _nanmax(np.abs(fd_res)),
    }
    if u.hess_fn is not None:
        residuals["max_abs_fd_vs_analytic"] = _nanmax(np.abs(fd_res - res))
    header = [f"x{i + 1}" for i in range(dim)] + ["residual", "flagged"]
    rows = {"header": header,
            "data": [list(map(float, p)) + [float(r), int(fl)] for p, r, fl in zip(pts, res, flagged)]}

    bad = np.flatnonzero((~flagged) & (res > tol))
    if len(bad):
        i = int(bad[0])
        hess = u.hess_fn(pts[i:i + 1])[0] if u.hess_fn is not None else hess1[i]
        witness = {"kind": "smooth_point", "point": pts[i], "residual": float(res[i]),
                   "hessian": hess, "operator_value": float(res[i] + fvals[i]),
                   "forcing": float(fvals[i])}
        return CheckReport("viscosity", VIOLATION, cfg.seed, witness, stats, residuals, rows)

    # nonsmooth points: inf-convolution diagnostics for ordering, then probing
    idx = np.flatnonzero(flagged)
    rng = cfg.rng(11)
    order = idx
    if len(idx) > cfg.probe_budget:
        order = np.sort(rng.choice(idx, size=cfg.probe_budget * 4, replace=False)) \
            if len(idx) > 4 * cfg.probe_budget else idx
    diag = []
    for i in order:
        vals = [_inf_convolution_residual(u, f, op, pts[i], e, h * 10, 2) for e in cfg.eps_schedule]
        vals = [v for v in vals if v is not None]
        diag.append(max(vals) if vals else -np.inf)
    diag = np.array(diag)
    ranked = order[np.argsort(-diag, kind="stable")][: cfg.probe_budget]
    residuals["max_infconv_residual"] = float(np.max(diag)) if len(diag) else None

    radius = cfg.probe_radius or 2.0 * float(np.max(grid.spacing))
    n = lattice_steps(dim, cfg.probe_lattice)
    probed = 0
    for i in ranked:
        probed += 1
        hit = _viscosity_probe(u, f, op, pts[i], grad1[i], radius, n, cfg, rng)
        if hit is not None:
            stats["probed_points"] = probed
            witness = {"kind": "touching_quadratic", "grid_point": pts[i], "point": hit.point,
                       "operator_value": hit.op_value, "forcing": hit.forcing,
                       "shell_gap": hit.shell_gap, "quadratic": hit.quadratic.to_dict()}
            return CheckReport("viscosity", VIOLATION, cfg.seed, witness, stats, residuals, rows)
    stats["probed_points"] = probed
    stats["probe_radius"] = radius
    return CheckReport("viscosity", CONSISTENT, cfg.seed, None, stats, residuals, rows)


def _nanmax(a):
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return float(np.max(a)) if len(a) else None


def _eval_ops(op: OperatorSpec, mats: np.ndarray) -> np.ndarray:
    if len(mats) == 0:
        return np.empty(0)
    if op.kind in (eigenops.LAMBDA_K, eigenops.PMINUS_K, eigenops.PPLUS_K):
        vals = eigenops.sorted_eigenvalues(mats)
        if op.kind == eigenops.LAMBDA_K:
            return vals[..., op.k - 1]
        if op.kind == eigenops.PMINUS_K:
            return np.sum(vals[..., : op.k], axis=-1)
        return np.sum(vals[..., -op.k:], axis=-1)
    return np.array([_op_value(op, x) for x in mats])


def _viscosity_probe(u, f, op, x, grad, radius, n, cfg, rng):
    dim = u.dim

    def weights(p):
        out = np.full(len(p), np.inf)
        ok = u.in_box(p)
        out[ok] = u.eval_fn(p[ok])
        return out

    def forcing(p):
        out = np.full(len(p), -np.inf)
        ok = f.in_box(p)
        out[ok] = f.eval_fn(p[ok])
        return out

    offsets = ball_lattice(dim, radius, n)
    w = weights(x + offsets)
    lip = _lipschitz_estimate(w, offsets, float(u.eval_fn(x[None, :])[0]))
    g = grad if np.all(np.isfinite(grad)) else np.zeros(dim)
    normal = _unit(g)
    dirs = [d for e in np.eye(dim) for d in (e, -e)]
    if normal is not None:
        dirs += [normal, -normal]
    grads = _gradient_pool(dim, dirs, [lip * m for m in (0.1, 0.3, 0.6)])
    if np.linalg.norm(g) < 10 * lip:
        grads = np.vstack([grads, g[None, :]])
    frames = operator_frames(dim, rng, _frame_from_normal(normal, dim), cfg.random_frames)
    base = hessian_templates(op, dim, _direction_pool(dim, normal), frames)
    s0 = lip / radius
    templates = np.concatenate([base * (s0 * m) for m in (0.25, 1.0, 4.0)])
    return _probe_search(x, radius, n, weights, forcing, op, templates, grads, cfg.tol_fd)


# ---------------------------------------------------------------------------
# geometric condition G


def default_omega(U: RegionSpec, margin: float = 0.5) -> RegionSpec:
    lo = np.asarray(U.bbox[0]) - margin
    hi = np.asarray(U.bbox[1]) + margin
    return box(lo, hi)


def _omega_grid(Omega: RegionSpec, resolution: int) -> GridSpec:
    """Cell-centred grid strictly inside Omega's bounding box."""
    lo = np.asarray(Omega.bbox[0], dtype=float)
    hi = np.asarray(Omega.bbox[1], dtype=float)
    step = (hi - lo) / resolution
    return GridSpec(tuple(lo + step / 2), tuple(hi - step / 2), resolution, 1e-9)


def _check_nesting(Omega: RegionSpec, U: RegionSpec, pts: np.ndarray, resolution: int = 24):
    if U.bounded:
        # also sample U's own box; Omega's grid alone never sees U leaking out
        pts = np.vstack([pts, _omega_grid(U, resolution).points()])
    in_u = U.inside(pts)
    bad = in_u & ~Omega.inside(pts)
    if np.any(bad):
        raise BadNesting(f"sampled point {pts[np.argmax(bad)].tolist()} lies in U but not in Omega")


def _g_candidates(Omega, U, cfg: CheckConfig, radius: float) -> Tuple[np.ndarray, dict]:
    """Boundary points of U inside Omega, most reentrant-looking first."""
    grid = _omega_grid(Omega, cfg.g_resolution)
    pts = grid.points()
    _check_nesting(Omega, U, pts)
    try:
        bpts = boundary_sample(U, grid)
    except EmptyBoundary:
        return np.empty((0, U.dim)), {"boundary_samples": 0}
    bpts = bpts[Omega.inside(bpts)]
    if len(bpts) == 0:
        return bpts, {"boundary_samples": 0}
    # complement fraction in a small ball: small near notches and reentrant edges
    small = ball_lattice(U.dim, radius, 3)
    frac = np.array([np.mean(~U.inside(b + small)) for b in bpts])
    rank = np.argsort(frac, kind="stable")
    half = max(1, cfg.g_budget // 2)
    first = rank[:half]
    rest = np.setdiff1d(np.arange(len(bpts)), first)
    rng = cfg.rng(21)
    extra = rng.permutation(rest)[: cfg.g_budget - len(first)] if len(rest) else rest
    chosen = np.concatenate([first, extra]).astype(int)
    return bpts[chosen], {"boundary_samples": int(len(bpts)), "probed_candidates": int(len(chosen))}


def _normal_estimates(U: RegionSpec, x: np.ndarray, offsets: np.ndarray, comp: np.ndarray,
                      radius: float) -> List[np.ndarray]:
    """Directions pointing from U into its complement at x."""
    out = []
    if U.signed_dist is not None:
        h = 1e-6 * max(radius, 1e-3)
        e = np.eye(U.dim) * h
        g = (U.signed_dist(x + e) - U.signed_dist(x - e)) / (2 * h)
        nv = _unit(g) if np.all(np.isfinite(g)) else None
        if nv is not None:
            out.append(nv)
    near = comp & (np.linalg.norm(offsets, axis=1) <= 0.5 * radius)
    if np.any(near):
        nv = _unit(np.mean(offsets[near], axis=0))
        if nv is not None and not any(np.dot(nv, o) > 1 - 1e-9 for o in out):
            out.append(nv)
    return out


def _tangent_directions(normal: np.ndarray, count: int, rng) -> List[np.ndarray]:
    t = tangent_basis(normal)
    if t.shape[1] == 1:
        return [t[:, 0], -t[:, 0]]
    if t.shape[1] == 2:
        angs = np.arange(count) * 2 * math.pi / count
        return [math.cos(a) * t[:, 0] + math.sin(a) * t[:, 1] for a in angs]
    dirs = [c * t[:, i] for i in range(t.shape[1]) for c in (1.0, -1.0)]
    extra = rng.normal(size=(count, t.shape[1]))
    dirs += [t @ (v / np.linalg.norm(v)) for v in extra]
    return dirs


def _boundary_ring(U, Omega, x, normal, radius, count, levels, rng):
    """Complement-side boundary points near x, bisected along the normal."""
    pts = []
    for tau in _tangent_directions(normal, count, rng):
        for j in range(1, levels + 1):
            y = x + radius * 2.0 ** (-j) * tau
            lo = y - 0.5 * radius * normal
            hi = y + 0.5 * radius * normal
            pts.append((lo, hi))
    lo = np.array([a for a, _ in pts])
    hi = np.array([b for _, b in pts])
    in_lo = U.inside(lo)
    in_hi = U.inside(hi)
    out = [lo[~in_lo], hi[~in_hi]]
    cross = in_lo & ~in_hi
    if np.any(cross):
        a, b = lo[cross], hi[cross]
        for _ in range(60):
            mid = 0.5 * (a + b)
            m = U.inside(mid)
            a = np.where(m[:, None], mid, a)
            b = np.where(m[:, None], b, mid)
        out.append(b)
    pts = np.vstack(out)
    keep = (np.linalg.norm(pts - x, axis=1) <= radius) & Omega.inside(pts)
    return pts[keep]


def _g_samples(Omega, U, x, radius, n, normals, count, levels, rng):
    offsets = ball_lattice(U.dim, radius, n)
    pts = x + offsets
    if not np.all(Omega.inside(pts)):
        return None, offsets
    comp = ~U.inside(pts)
    samples = [pts[comp]]
    for nv in normals:
        samples.append(_boundary_ring(U, Omega, x, nv, radius, count, levels, rng))
    return np.vstack(samples) - x, offsets


def _g_probe(Omega, U, op, x, radius, n, cfg, rng):
    """Search phi with phi(x) = 0, phi <= 0 on sampled complement near x, F(D^2 phi) > 0."""
    dim = U.dim
    offsets = ball_lattice(dim, radius, n)
    pts = x + offsets
    if not np.all(Omega.inside(pts)):
        return "skipped"
    comp = ~U.inside(pts)
    normals = _normal_estimates(U, x, offsets, comp, radius)
    if not normals:
        return None
    count = 16 if dim == 3 else 12
    samples, _ = _g_samples(Omega, U, x, radius, n, normals, count, 6, cfg.rng(23))
    dirs = [-nv for nv in normals] + [d for e in np.eye(dim) for d in (e, -e)]
    grads = _gradient_pool(dim, dirs, [radius * m for m in (0.5, 2.0, 8.0, 32.0, 128.0)])
    frames = operator_frames(dim, rng, _frame_from_normal(normals[0], dim), cfg.random_frames)
    pool = []
    for nv in normals:
        pool += _direction_pool(dim, nv)
    templates = hessian_templates(op, dim, pool, frames, s=1.0)
    vals = np.array([_op_value(op, t) for t in templates])
    hit = _g_first_touch(samples, templates, grads, vals, cfg.tol_analytic, radius)
    if hit is not None:
        t, p, _ = hit
        found = _g_verify(Omega, U, x, templates[t], grads[p], vals[t], radius, n, normals,
                          count, cfg)
        if found is not None:
            return found
    # let the touching point move to where phi peaks on the complement
    for t, p, y in _g_recentre_candidates(samples, templates, grads, vals, radius, cfg):
        y0 = x + y
        ystar = _local_max(Omega, U, templates[t], grads[p], x, y0, radius, cfg.rng(25))
        if np.linalg.norm(ystar - x) > 0.5 * radius:
            continue
        g = grads[p] + templates[t] @ (ystar - x)
        offs = ball_lattice(dim, radius, n)
        comp_y = ~U.inside(ystar + offs)
        normals_y = _normal_estimates(U, ystar, offs, comp_y, radius) or normals
        found = _g_verify(Omega, U, ystar, templates[t], g, vals[t], radius, n, normals_y,
                          count, cfg)
        if found is not None:
            return found
    return None


def _g_verify(Omega, U, x, hess, grad, val, radius, n, normals, count, cfg):
    """Exact-touch test at x at density n, then again at 4n."""
    if U.inside(x[None])[0] or not Omega.inside(x[None])[0]:
        return None
    for dens, cnt, lev, salt in ((n, count, 6, 26), (4 * n, 2 * count, 10, 24)):
        samples, _ = _g_samples(Omega, U, x, radius, dens, normals, cnt, lev, cfg.rng(salt))
        if samples is None:
            return None
        hit = _g_first_touch(samples, hess[None], grad[None], np.array([val]),
                             cfg.tol_analytic, radius)
        if hit is None:
            return None
        worst = hit[2]
    quad = ProbeQuadratic(x, 0.0, grad, hess, radius, -worst, validated=True)
    return ProbeHit(x, quad, float(val), 0.0, -worst)


def _g_recentre_candidates(samples, templates, grads, vals, radius, cfg, limit: int = 4):
    """(template, gradient, sample) triples whose phi peaks well inside the ball."""
    dist = np.linalg.norm(samples, axis=1)
    inner = dist <= 0.5 * radius
    shell = dist >= 0.75 * radius
    quad = 0.5 * np.einsum("si,tij,sj->ts", samples, templates, samples)
    lin = grads @ samples.T
    scored = []
    for t in np.flatnonzero(vals > cfg.tol_analytic):
        phi = lin + quad[t][None, :]
        j = np.argmax(phi, axis=1)
        top = phi[np.arange(len(grads)), j]
        sh = np.max(phi[:, shell], axis=1) if np.any(shell) else np.full(len(grads), -np.inf)
        ok = inner[j] & (top > 0) & (top > sh)
        for p in np.flatnonzero(ok):
            scored.append((float(top[p] - sh[p]), int(t), int(p), samples[j[p]]))
    scored.sort(key=lambda item: -item[0])
    return [(t, p, y) for _, t, p, y in scored[:limit]]


def _local_max(Omega, U, hess, grad, centre, y0, radius, rng, iters: int = 400):
    """Pattern search for the maximum of the quadratic over the complement near y0."""
    dim = len(centre)
    dirs = [e * c for e in np.eye(dim) for c in (1.0, -1.0)]
    for i, j in itertools.combinations(range(dim), 2):
        for a, b in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            v = np.zeros(dim)
            v[i], v[j] = a, b
            dirs.append(v / math.sqrt(2))
    rand = rng.normal(size=(16, dim))
    dirs = np.vstack([np.array(dirs), rand / np.linalg.norm(rand, axis=1)[:, None]])

    def phi(y):
        d = y - centre
        return d @ grad + 0.5 * np.einsum("mi,ij,mj->m", d, hess, d)

    y = y0.copy()
    val = phi(y[None])[0]
    step = 0.25 * radius
    for _ in range(iters):
        cand = y + step * dirs
        ok = (~U.inside(cand)) & Omega.inside(cand) & (np.linalg.norm(cand - centre, axis=1) <= radius)
        if np.any(ok):
            v = phi(cand)
            v[~ok] = -np.inf
            k = int(np.argmax(v))
            if v[k] > val:
                y, val = cand[k], v[k]
                continue
        step *= 0.5
        if step < 1e-13 * radius:
            break
    return y


def _g_first_touch(samples, templates, grads, vals, tol, radius):
    """First (template, gradient) with phi <= 0 on all samples and F > tol."""
    if len(samples) == 0:
        return None
    quad = 0.5 * np.einsum("si,tij,sj->ts", samples, templates, samples)
    lin = grads @ samples.T
    slack = 1e-10 * (1.0 + np.max(np.linalg.norm(grads, axis=1)) * radius)
    for t in np.flatnonzero(vals > tol):
        phi = lin + quad[t][None, :]
        worst = np.max(phi, axis=1)
        good = np.flatnonzero(worst <= slack)
        if len(good):
            p = int(good[0])
            return int(t), p, float(worst[p])
    return None


def _g_radius(U: RegionSpec, cfg: CheckConfig) -> float:
    if cfg.probe_radius:
        return float(cfg.probe_radius)
    edges = np.asarray(U.bbox[1]) - np.asarray(U.bbox[0])
    return 0.1 * float(np.min(edges))


def check_G_condition(op: OperatorSpec, Omega: Optional[RegionSpec], U: RegionSpec,
                      cfg: Optional[CheckConfig] = None) -> CheckReport:
    """Probe the geometric condition G for F = op on Omega minus U.

    A witness is a quadratic phi with phi <= 0 on the sampled complement near
    a point where it vanishes, strict away from it, and F(D^2 phi) > 0.
    """
    cfg = cfg or CheckConfig()
    Omega = Omega if Omega is not None else default_omega(U, cfg.omega_margin)
    in_scope = _require_scope(op, U.dim)
    radius = _g_radius(U, cfg)
    cands, stats = _g_candidates(Omega, U, cfg, radius)
    stats.update({"operator": op.label, "probe_radius": radius, "in_scope": bool(in_scope)})
    n = lattice_steps(U.dim, cfg.probe_lattice)
    rng = cfg.rng(22)
    skipped = 0
    for i, x in enumerate(cands):
        hit = _g_probe(Omega, U, op, x, radius, n, cfg, rng)
        if isinstance(hit, str):
            skipped += 1
            continue
        if hit is not None:
            stats["skipped_near_omega_boundary"] = skipped
            stats["probes"] = i + 1
            witness = {"kind": "touching_quadratic", "sample_point": x, "point": hit.point,
                       "operator_value": hit.op_value, "shell_gap": hit.shell_gap,
                       "quadratic": hit.quadratic.to_dict()}
            return CheckReport("g_condition", VIOLATION, cfg.seed, witness, stats)
    stats["probes"] = int(len(cands))
    stats["skipped_near_omega_boundary"] = skipped
    return CheckReport("g_condition", CONSISTENT, cfg.seed, None, stats)


# ---------------------------------------------------------------------------
# cylinder condition C_k


_PARTS = ("lateral", "interior", "caps")


def _local_samples(k: int, m: int, a: float, b: float, density: int):
    parts = cylinder_local_parts(k, m, a, b, density)
    local = np.vstack([parts[p] for p in _PARTS])
    labels = np.concatenate([np.full(len(parts[p]), i) for i, p in enumerate(_PARTS)])
    return local, labels


def _sweep(Omega, U, frame, centre, direction, k, a, b, density, travel, tie):
    """Slide a cylinder along ``direction`` until its first sampled point leaves U.

    Returns (t, status) where status is "witness" when only cap samples have
    left U at time t, the lateral boundary and interior stay inside slightly
    beyond t, and the closure is inside Omega.
    """
    dim = len(centre)
    local, labels = _local_samples(k, dim - k, a, b, density)
    world = centre + local @ frame.T

    def state(t):
        p = world + t * direction
        return U.inside(p), Omega.inside(p)

    in_u, in_o = state(0.0)
    if not (np.all(in_u) and np.all(in_o)):
        return None, "start_outside"
    step = 0.5 * min(a, b)
    t_lo, t_hi = 0.0, None
    t = step
    while t <= travel:
        in_u, in_o = state(t)
        if not (np.all(in_u) and np.all(in_o)):
            t_hi = t
            break
        t_lo = t
        t += step
    if t_hi is None:
        return None, "no_contact"
    for _ in range(60):
        mid = 0.5 * (t_lo + t_hi)
        in_u, in_o = state(mid)
        if np.all(in_u) and np.all(in_o):
            t_lo = mid
        else:
            t_hi = mid
    in_u, in_o = state(t_hi)
    if not np.all(in_o):
        return t_hi, "left_omega"
    out = ~in_u
    if np.any(out & (labels != 2)):
        return t_hi, "lateral_first"
    in_u2, _ = state(t_hi + tie)
    if not np.all(in_u2[labels != 2]):
        return t_hi, "tie"
    return t_hi, "witness"


def _sweep_frames(dim: int) -> List[np.ndarray]:
    frames = [np.eye(dim)[:, list(p)] for p in itertools.permutations(range(dim))][:24]
    c = math.sqrt(0.5)
    for i, j in itertools.combinations(range(dim), 2):
        for sgn in (1.0, -1.0):
            q = np.eye(dim)
            q[i, i], q[i, j], q[j, i], q[j, j] = c, -sgn * c, sgn * c, c
            for p in itertools.permutations(range(dim)):
                frames.append(q[:, list(p)])
    # deduplicate up to column order within the k and m blocks is left to the caller
    return frames


def _cylinder_scale(U: RegionSpec) -> float:
    edges = np.asarray(U.bbox[1]) - np.asarray(U.bbox[0])
    return float(np.min(edges))


def _verify_cylinder(Omega, U, cyl: Cylinder, density: int) -> bool:
    local, labels = _local_samples(cyl.split_k, cyl.dim - cyl.split_k, cyl.a, cyl.b, density)
    pts = cyl.to_world(local)
    in_u = U.inside(pts)
    if not np.all(Omega.inside(pts)):
        return False
    if not np.all(in_u[labels != 2]):
        return False
    return bool(np.any(~in_u[labels == 2]))


def check_C_k(Omega: Optional[RegionSpec], U: RegionSpec, k: int,
              cfg: Optional[CheckConfig] = None) -> CheckReport:
    """Search for cylinders in Omega whose lateral boundary and interior lie in U
    while part of a cap does not."""
    cfg = cfg or CheckConfig()
    dim = U.dim
    if not 1 <= k < dim:
        raise BadParam(f"C_k needs 1 <= k < N, got k={k}, N={dim}")
    Omega = Omega if Omega is not None else default_omega(U, cfg.omega_margin)
    rng = cfg.rng(31)
    scale = _cylinder_scale(U)
    lo_u = np.asarray(U.bbox[0])
    hi_u = np.asarray(U.bbox[1])
    travel = float(np.linalg.norm(hi_u - lo_u))
    tie = 1e-9 * scale
    dens = cfg.cylinder_density
    stats = {"k": k, "sweep_budget": cfg.cylinder_sweeps, "random_budget": cfg.cylinder_random,
             "density": dens, "verify_density": 4 * dens}

    # directed sweeps
    seeds_grid = GridSpec(tuple(lo_u), tuple(hi_u), 13, 1e-9).points()
    seeds = seeds_grid[U.inside(seeds_grid) & Omega.inside(seeds_grid)]
    frames = _sweep_frames(dim)
    a_list = [scale * f for f in (0.1, 0.2, 0.35, 0.5)]
    b_list = [scale * f for f in (0.05, 0.1, 0.2)]
    outcomes: Dict[str, int] = {}
    sweeps = 0
    if len(seeds):
        for _ in range(cfg.cylinder_sweeps):
            sweeps += 1
            seed = seeds[rng.integers(len(seeds))]
            frame = frames[rng.integers(len(frames))]
            col = k + int(rng.integers(dim - k))
            direction = frame[:, col] * (1.0 if rng.random() < 0.5 else -1.0)
            a = a_list[rng.integers(len(a_list))]
            b = b_list[rng.integers(len(b_list))]
            t, status = _sweep(Omega, U, frame, seed, direction, k, a, b, max(2, dens // 2),
                               travel, tie)
            outcomes[status] = outcomes.get(status, 0) + 1
            if status != "witness":
                continue
            confirmed = True
            for d in (dens, 4 * dens):
                t, status = _sweep(Omega, U, frame, seed, direction, k, a, b, d, travel, tie)
                if status != "witness":
                    confirmed = False
                    break
            if not confirmed:
                outcomes["unconfirmed"] = outcomes.get("unconfirmed", 0) + 1
                continue
            cyl = Cylinder(k, a, b, seed + t * direction, frame)
            stats.update({"sweeps": sweeps, "sweep_outcomes": outcomes, "random_draws": 0})
            witness = {"kind": "cylinder", "source": "directed_sweep", "cylinder": cyl.to_dict(),
                       "start_centre": seed, "direction": direction, "contact_time": t}
            return CheckReport("c_k", VIOLATION, cfg.seed, witness, stats)
    stats["sweeps"] = sweeps
    stats["sweep_outcomes"] = outcomes

    # random rigid cylinders
    lo_o = np.asarray(Omega.bbox[0])
    hi_o = np.asarray(Omega.bbox[1])
    rlo, rhi = (scale * r for r in cfg.radius_range)
    local_unit, labels = None, None
    batch = 2000
    drawn = 0
    candidates = 0
    while drawn < cfg.cylinder_random:
        m = min(batch, cfg.cylinder_random - drawn)
        centres = lo_o + (hi_o - lo_o) * rng.random((m, dim))
        qs = eigenops.random_orthogonal(rng, dim, m)
        ab = np.exp(rng.uniform(math.log(rlo), math.log(rhi), size=(m, 2)))
        drawn += m
        parts = cylinder_local_parts(k, dim - k, 1.0, 1.0, 2)
        loc = [parts[p] for p in _PARTS]
        lab = np.concatenate([np.full(len(x), i) for i, x in enumerate(loc)])
        loc = np.vstack(loc)
        scaled = np.concatenate([loc[None, :, :k] * ab[:, None, :1], loc[None, :, k:] * ab[:, None, 1:]],
                                axis=2)
        pts = centres[:, None, :] + np.einsum("mij,msj->msi", qs, scaled)
        flat = pts.reshape(-1, dim)
        in_u = U.inside(flat).reshape(m, -1)
        in_o = Omega.inside(flat).reshape(m, -1)
        ok = np.all(in_o, axis=1) & np.all(in_u[:, lab != 2], axis=1) & np.any(~in_u[:, lab == 2], axis=1)
        for i in np.flatnonzero(ok):
            candidates += 1
            cyl = Cylinder(k, float(ab[i, 0]), float(ab[i, 1]), centres[i], qs[i])
            if _verify_cylinder(Omega, U, cyl, dens) and _verify_cylinder(Omega, U, cyl, 4 * dens):
                stats.update({"random_draws": drawn, "random_candidates": candidates})
                witness = {"kind": "cylinder", "source": "random", "cylinder": cyl.to_dict()}
                return CheckReport("c_k", VIOLATION, cfg.seed, witness, stats)
    stats.update({"random_draws": drawn, "random_candidates": candidates})
    return CheckReport("c_k", CONSISTENT, cfg.seed, None, stats)


# ---------------------------------------------------------------------------
# curvature criteria, equivalence, convexity


def curvature_statistic(kappas: np.ndarray, op: OperatorSpec) -> np.ndarray:
    """kappa_{N-k} for lambda_k, and the sum of the k largest curvatures for P_k^-."""
    kappas = np.atleast_2d(kappas)
    n = kappas.shape[1] + 1
    if not 1 <= op.k < n:
        raise BadParam(f"curvature criterion needs 1 <= k < N, got k={op.k}")
    if op.kind == eigenops.LAMBDA_K:
        return kappas[:, n - op.k - 1]
    if op.kind == eigenops.PMINUS_K:
        return np.sum(kappas[:, n - op.k - 1:], axis=1)
    raise OperatorUnavailable(f"no curvature criterion for {op.label}")


def check_curvature_criterion(U: RegionSpec, op: OperatorSpec, grid: GridSpec,
                              cfg: Optional[CheckConfig] = None) -> CheckReport:
    """Evaluate the principal-curvature criterion over boundary samples."""
    cfg = cfg or CheckConfig()
    pts = boundary_sample(U, grid)
    ks = np.array([principal_curvatures(U, p).kappas for p in pts])
    stat = curvature_statistic(ks, op)
    worst = int(np.argmin(stat))
    header = [f"x{i + 1}" for i in range(U.dim)] + [f"kappa{i + 1}" for i in range(U.dim - 1)]
    rows = {"header": header, "data": [list(map(float, p)) + list(map(float, k)) for p, k in zip(pts, ks)]}
    stats = {"boundary_samples": int(len(pts)), "operator": op.label, "tolerance": cfg.curvature_tol}
    residuals = {"min_statistic": float(stat[worst]), "max_statistic": float(np.max(stat)),
                 "min_kappa": float(np.min(ks)), "max_kappa": float(np.max(ks))}
    if stat[worst] >= -cfg.curvature_tol:
        return CheckReport("curvature", CERTIFICATE, cfg.seed, None, stats, residuals, rows)
    witness = {"kind": "boundary_point", "point": pts[worst], "kappas": ks[worst],
               "statistic": float(stat[worst])}
    return CheckReport("curvature", VIOLATION, cfg.seed, witness, stats, residuals, rows)


def cross_check_equivalence(Omega: Optional[RegionSpec], U: RegionSpec, k: int,
                            cfg: Optional[CheckConfig] = None) -> CheckReport:
    """Compare C_k with G for lambda_{N-k}; agreement is the expected outcome."""
    cfg = cfg or CheckConfig()
    dim = U.dim
    if not 1 <= k < dim:
        raise BadParam(f"equivalence needs 1 <= k < N, got k={k}")
    c = check_C_k(Omega, U, k, cfg)
    g = check_G_condition(OperatorSpec(eigenops.LAMBDA_K, dim - k), Omega, U, cfg)
    c_fail = c.verdict == VIOLATION
    g_fail = g.verdict == VIOLATION
    stats = {"k": k, "c_k_verdict": c.verdict, "g_verdict": g.verdict,
             "g_operator": f"lambda_k[k={dim - k}]", "agree": c_fail == g_fail}
    verdict = CERTIFICATE if c_fail == g_fail else VIOLATION
    witness = None if verdict == CERTIFICATE else {"kind": "disagreement", "c_k": c.witness, "g": g.witness}
    return CheckReport("equivalence", verdict, cfg.seed, witness, stats, children=[c, g])


def check_convexity(U: RegionSpec, grid: GridSpec, cfg: Optional[CheckConfig] = None,
                    trials: int = 2000) -> CheckReport:
    """Convexity of every grid component; a nonconvex one yields a segment witness."""
    cfg = cfg or CheckConfig()
    comps = connected_components(U, grid)
    rng = cfg.rng(41)
    spacing = float(np.min(grid.spacing))
    results = []
    for i, comp in enumerate(comps):
        res = is_component_convex(comp, U, trials, rng, spacing)
        results.append(res)
        if not res.convex:
            x, y, z = res.witness
            stats = {"components": len(comps), "sizes": [len(c) for c in comps], "trials": res.trials}
            witness = {"kind": "segment", "component": i, "x": x, "y": y, "outside": z}
            return CheckReport("convexity", VIOLATION, cfg.seed, witness, stats)
    stats = {"components": len(comps), "sizes": [len(c) for c in comps], "trials": trials}
    return CheckReport("convexity", CONSISTENT, cfg.seed, None, stats)


# ---------------------------------------------------------------------------
# locality


def check_locality(Omega: Optional[RegionSpec], sub_boxes: Sequence, U: RegionSpec,
                   op: OperatorSpec, cfg: Optional[CheckConfig] = None) -> CheckReport:
    """Restriction and cover consistency of G verdicts across sub-boxes of Omega.

    ``sub_boxes`` are (lo, hi) pairs or box RegionSpecs.  A pass on Omega must
    give a pass on every sub-box; when the sub-boxes cover Omega's box, passes
    on all of them must give a pass on Omega.
    """
    cfg = cfg or CheckConfig()
    from .regions import intersection

    Omega = Omega if Omega is not None else default_omega(U, cfg.omega_margin)
    radius = _g_radius(U, cfg)
    sub_cfg = replace(cfg, probe_radius=radius)
    main = check_G_condition(op, Omega, U, sub_cfg)
    subs = []
    boxes = []
    for sb in sub_boxes:
        b = sb if isinstance(sb, RegionSpec) else box(sb[0], sb[1])
        boxes.append(b)
        lo = np.maximum(b.bbox[0], Omega.bbox[0])
        hi = np.minimum(b.bbox[1], Omega.bbox[1])
        if np.any(np.asarray(b.bbox[0]) < np.asarray(Omega.bbox[0]) - 1e-12) or \
                np.any(np.asarray(b.bbox[1]) > np.asarray(Omega.bbox[1]) + 1e-12):
            raise BadNesting("sub-box is not inside Omega")
        sub_u = intersection(U, box(lo, hi))
        subs.append(check_G_condition(op, b, sub_u, sub_cfg))
    covers = _boxes_cover(Omega, boxes)
    main_fail = main.verdict == VIOLATION
    sub_fail = [s.verdict == VIOLATION for s in subs]
    problems = []
    if not main_fail:
        problems += [{"rule": "restriction", "sub_box": i} for i, f in enumerate(sub_fail) if f]
    if covers and main_fail and not any(sub_fail):
        problems.append({"rule": "cover", "sub_box": None})
    stats = {"main_verdict": main.verdict, "sub_verdicts": [s.verdict for s in subs],
             "sub_boxes": [b.bbox for b in boxes], "cover": covers}
    verdict = VIOLATION if problems else CERTIFICATE
    witness = {"kind": "locality", "problems": problems} if problems else None
    return CheckReport("locality", verdict, cfg.seed, witness, stats, children=[main] + subs)


def _boxes_cover(Omega: RegionSpec, boxes: Sequence[RegionSpec], resolution: int = 9) -> bool:
    lo = np.asarray(Omega.bbox[0])
    hi = np.asarray(Omega.bbox[1])
    pts = GridSpec(tuple(lo), tuple(hi), resolution, 1e-9).points()
    pts = pts[Omega.inside(pts)]
    covered = np.zeros(len(pts), dtype=bool)
    for b in boxes:
        blo = np.asarray(b.bbox[0]) - 1e-12
        bhi = np.asarray(b.bbox[1]) + 1e-12
        covered |= np.all((pts >= blo) & (pts <= bhi), axis=1)
    return bool(np.all(covered))


# ---------------------------------------------------------------------------
# positivity set roundtrip


def positivity_set_roundtrip(u: ScalarField, op: OperatorSpec, Omega: Optional[RegionSpec],
                             grid: GridSpec, cfg: Optional[CheckConfig] = None) -> CheckReport:
    """Extract U = {u > pos_tol} and probe the geometric conditions on it."""
    from .regions import from_field

    cfg = cfg or CheckConfig()
    pts = grid.points()
    if Omega is not None:
        pts = pts[Omega.inside(pts)]
    pts = pts[u.in_box(pts)]
    vals = u.eval_fn(pts)
    if np.min(vals) < -cfg.pos_tol:
        i = int(np.argmin(vals))
        raise NotNonnegative(f"u({pts[i].tolist()}) = {vals[i]:.3g} < 0")
    pos = pts[vals > cfg.pos_tol]
    if len(pos) == 0:
        raise BadParam("u has no positive grid values")
    sp = grid.spacing
    lo = pos.min(axis=0) - sp
    hi = pos.max(axis=0) + sp
    U = from_field(u.eval_fn, u.dim, lo, hi, cfg.pos_tol)
    if Omega is None:
        dlo, dhi = (np.asarray(b) for b in u.domain_box)
        Omega = box(np.maximum(dlo, lo - cfg.omega_margin), np.minimum(dhi, hi + cfg.omega_margin))
    children = [check_G_condition(op, Omega, U, cfg)]
    if op.kind == eigenops.LAMBDA_K and op.k < u.dim:
        children.append(check_C_k(Omega, U, u.dim - op.k, cfg))
    fails = [c.check for c in children if c.verdict == VIOLATION]
    stats = {"operator": op.label, "positive_points": int(len(pos)), "grid_points": int(len(pts)),
             "min_u": float(np.min(vals)), "child_verdicts": [c.verdict for c in children]}
    verdict = VIOLATION if fails else CERTIFICATE
    witness = {"kind": "positivity_set", "failed": fails,
               "details": [c.witness for c in children if c.verdict == VIOLATION]} if fails else None
    return CheckReport("roundtrip", verdict, cfg.seed, witness, stats, children=children)


# ---------------------------------------------------------------------------
# strong maximum principle classification


@dataclass
class SmpClassification:
    """Which sufficient conditions on Gamma = {f = 0} were certified.

    A certified condition rules out an interior minimum; an uncertified one
    only means the search found nothing (it is never a disproof).
    """

    operator: str
    gamma_count: int
    gamma_sample: list
    isolated: dict
    interior: dict
    shells_lambda: dict
    shells_pminus: dict
    stats: dict = field(default_factory=dict)

    @property
    def any_certified(self) -> bool:
        return any(c.get("certified") for c in
                   (self.isolated, self.interior, self.shells_lambda, self.shells_pminus))

    def to_dict(self) -> dict:
        return _clean({"operator": self.operator, "gamma_count": self.gamma_count,
                       "gamma_sample": self.gamma_sample, "i": self.isolated, "ii": self.interior,
                       "iii": self.shells_lambda, "iv": self.shells_pminus, "stats": self.stats})


def _smp_grid(Omega: RegionSpec, f: ScalarField, target: int) -> GridSpec:
    lo = np.maximum(np.asarray(Omega.bbox[0]), np.asarray(f.domain_box[0]))
    hi = np.minimum(np.asarray(Omega.bbox[1]), np.asarray(f.domain_box[1]))
    n = max(9, int(round(target ** (1.0 / Omega.dim))))
    n += 1 - n % 2  # odd, so symmetric boxes contain their centre
    return GridSpec(tuple(lo), tuple(hi), n, 1e-9)


def _boundary_distance(Omega: RegionSpec):
    if Omega.signed_dist is not None:
        return lambda p: np.maximum(-Omega.signed_dist(np.atleast_2d(p)), 0.0)
    from .fields import distance_field
    return distance_field(Omega).eval_fn


def _extract_gamma(f: ScalarField, Omega: RegionSpec, grid: GridSpec, cfg: CheckConfig):
    from scipy import ndimage

    pts = grid.points()
    mask = Omega.inside(pts) & f.in_box(pts)
    vals = np.full(len(pts), -np.inf)
    vals[mask] = f.eval_fn(pts[mask])
    top = int(np.argmax(vals))
    if vals[top] > cfg.zero_tol:
        raise BadForcing(f"f({pts[top].tolist()}) = {vals[top]:.3g} > 0")
    zero = mask & (np.abs(vals) <= cfg.zero_tol)
    # sharpen: local maxima of the sampled f that come close to zero
    sp = grid.spacing
    arr = vals.reshape(grid.shape)
    steps = np.abs(np.diff(np.where(np.isfinite(arr), arr, np.nan), axis=0))
    lip = float(np.nanmax(steps) / sp[0]) if np.any(np.isfinite(steps)) else 0.0
    thr = lip * float(np.linalg.norm(sp))
    peaks = (ndimage.maximum_filter(arr, size=3, mode="nearest") == arr).ravel()
    cand = np.flatnonzero(mask & peaks & ~zero & (vals >= -thr))[:2000]
    extra = []
    for i in cand:
        y = _maximise(f, Omega, pts[i], sp)
        if y is not None and f.eval_fn(y[None])[0] >= -cfg.zero_tol:
            extra.append(y)
    gamma = pts[zero]
    if extra:
        gamma = np.unique(np.round(np.vstack([gamma, np.array(extra)]), 12), axis=0)
    return gamma, {"grid_resolution": grid.resolution, "grid_zero_points": int(zero.sum()),
                   "sharpened_points": len(extra), "lipschitz_estimate": lip}


def _maximise(f: ScalarField, Omega: RegionSpec, x0: np.ndarray, spacing: np.ndarray,
              iters: int = 200) -> Optional[np.ndarray]:
    """Coordinate pattern search for a local maximum of f near x0."""
    x = x0.copy()
    fx = f.eval_fn(x[None])[0]
    step = spacing.copy()
    dirs = np.vstack([np.eye(len(x)), -np.eye(len(x))])
    for _ in range(iters):
        trial = x + dirs * step
        ok = Omega.inside(trial) & f.in_box(trial) & (np.all(np.abs(trial - x0) <= spacing, axis=1))
        if not np.any(ok):
            break
        tv = np.full(len(trial), -np.inf)
        tv[ok] = f.eval_fn(trial[ok])
        j = int(np.argmax(tv))
        if tv[j] > fx:
            x, fx = trial[j], tv[j]
        else:
            step = step / 2
            if np.max(step) < 1e-12:
                break
    return x


def _smp_isolation(gamma: np.ndarray, spacing: np.ndarray, radius: float) -> dict:
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc
    from scipy.spatial import cKDTree

    h = float(np.max(spacing))
    if len(gamma) == 0:
        return {"certified": True, "clusters": 0, "isolation_radii": [], "reason": "Gamma is empty"}
    tree = cKDTree(gamma)
    pairs = tree.query_pairs(1.5 * float(np.linalg.norm(spacing)), output_type="ndarray")
    n = len(gamma)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) \
        else coo_matrix((n, n))
    ncl, labels = cc(graph, directed=False)
    diam = np.zeros(ncl)
    reps = np.zeros((ncl, gamma.shape[1]))
    for c in range(ncl):
        members = gamma[labels == c]
        diam[c] = float(np.linalg.norm(members.max(axis=0) - members.min(axis=0)))
        reps[c] = members.mean(axis=0)
    radii = []
    for c in range(ncl):
        others = gamma[labels != c]
        radii.append(float(np.min(cKDTree(others).query(gamma[labels == c])[0])) if len(others) else None)
    finite = [r for r in radii if r is not None]
    sep = min(finite) if finite else np.inf
    certified = bool(np.max(diam) <= h * (1 + 1e-9) and sep >= radius)
    out = {"certified": certified, "clusters": int(ncl), "max_cluster_diameter": float(np.max(diam)),
           "min_separation": None if not finite else float(sep), "required_separation": radius,
           "isolation_radii": [{"point": reps[c], "radius": radii[c]} for c in range(min(ncl, 64))]}
    if not certified:
        out["reason"] = "cluster wider than grid spacing" if np.max(diam) > h * (1 + 1e-9) \
            else "clusters closer than the isolation radius"
    return out


def _random_frames(dim: int, count: int, rng) -> List[np.ndarray]:
    out = []
    for _ in range(count):
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        out.append(q * np.sign(np.diag(r)))
    return out


def _shell_search(gamma: np.ndarray, x: np.ndarray, f: ScalarField, k: int, dist: float,
                  tau: float, frames: Sequence[np.ndarray], radii_n: int, ratio: bool,
                  cfg: CheckConfig) -> Optional[dict]:
    """First (h, frame, r1, r2) whose lateral shell keeps clear of sampled Gamma."""
    dim = len(x)
    if dist <= 2 * tau:
        return None
    radii = np.geomspace(2 * tau, dist, radii_n + 1)[:-1]
    r1, r2 = np.meshgrid(radii, radii, indexing="ij")
    r1, r2 = r1.ravel(), r2.ravel()
    fits = r1 ** 2 + r2 ** 2 < dist ** 2
    d = gamma - x
    for h in range(1, k):
        ok_ratio = (k / h - 1) - (r2 / r1) ** 2 >= 1e-9 if ratio else np.ones_like(fits)
        base = fits & ok_ratio
        if not np.any(base):
            continue
        s1, i1 = _ball_factor_cached(h, 4)
        s2, _ = _ball_factor_cached(dim - h, 4)
        disk = np.vstack([s1, i1])
        shell = np.hstack([np.repeat(disk, len(s2), axis=0), np.tile(s2, (len(disk), 1))])
        for fi, frame in enumerate(frames):
            loc = d @ frame
            a = np.linalg.norm(loc[:, :h], axis=1)
            b = np.linalg.norm(loc[:, h:], axis=1)
            gap = np.sqrt(np.maximum(a[None, :] - r1[:, None], 0.0) ** 2 + (b[None, :] - r2[:, None]) ** 2)
            clear = base & (np.min(gap, axis=1) > tau)
            for j in np.flatnonzero(clear):
                samples = x + (shell * np.r_[[r1[j]] * h, [r2[j]] * (dim - h)]) @ frame.T
                inside = f.in_box(samples)
                if not np.all(inside) or np.max(f.eval_fn(samples)) >= -cfg.zero_tol:
                    continue
                cert = {"point": x, "h": h, "r1": float(r1[j]), "r2": float(r2[j]),
                        "frame_index": fi, "frame": frame, "gamma_clearance": float(np.min(gap[j]))}
                if ratio:
                    cert["ratio_slack"] = float((k / h - 1) - (r2[j] / r1[j]) ** 2)
                return cert
    return None


_BALL_CACHE: Dict[Tuple[int, int], tuple] = {}


def _ball_factor_cached(dim: int, density: int):
    from .regions import _ball_factor

    key = (dim, density)
    if key not in _BALL_CACHE:
        _BALL_CACHE[key] = _ball_factor(dim, density)
    return _BALL_CACHE[key]


def _smp_shells(gamma, f, Omega, op, cfg, spacing, ratio: bool) -> dict:
    dim = f.dim
    k = op.k
    if k < 2:
        return {"certified": False, "applicable": True, "reason": "needs k >= 2 so that 1 <= h <= k-1",
                "certificates": [], "not_found": []}
    if len(gamma) == 0:
        return {"certified": True, "applicable": True, "reason": "Gamma is empty",
                "certificates": [], "not_found": []}
    centre = (np.asarray(Omega.bbox[0]) + np.asarray(Omega.bbox[1])) / 2
    order = np.lexsort(tuple(gamma.T[::-1]) + (np.round(np.linalg.norm(gamma - centre, axis=1), 12),))
    bdist = _boundary_distance(Omega)
    tau = 0.5 * float(np.linalg.norm(spacing)) * (1 + 1e-6)
    perms = [np.eye(dim)[:, list(p)] for p in itertools.permutations(range(dim))]
    certs, missing = [], []
    for idx in order[:cfg.smp_gamma_cap]:
        x = gamma[idx]
        frames = perms + _random_frames(dim, cfg.smp_random_frames, cfg.rng(900 + int(idx)))
        cert = _shell_search(gamma, x, f, k, float(bdist(x[None])[0]), tau, frames, cfg.smp_radii,
                             ratio, cfg)
        if cert is None:
            missing.append(x)
            break
        certs.append(cert)
    exhausted = len(gamma) <= cfg.smp_gamma_cap
    out = {"certified": not missing and exhausted, "applicable": True, "certificates": certs,
           "not_found": missing, "examined": len(certs) + len(missing), "clearance_tolerance": tau}
    if missing:
        out["reason"] = "no admissible lateral shell found"
    elif not exhausted:
        out["reason"] = f"Gamma has {len(gamma)} sampled points, over the budget {cfg.smp_gamma_cap}"
    return out


def classify_smp(f: ScalarField, Omega: RegionSpec, op: OperatorSpec,
                 cfg: Optional[CheckConfig] = None, grid: Optional[GridSpec] = None) -> SmpClassification:
    """Search for certificates of the sufficient conditions on Gamma = {f = 0}."""
    cfg = cfg or CheckConfig()
    if f.dim != Omega.dim:
        raise BadParam("forcing and Omega dimensions differ")
    grid = grid or _smp_grid(Omega, f, cfg.smp_points)
    gamma, gstats = _extract_gamma(f, Omega, grid, cfg)
    spacing = grid.spacing
    iso_r = cfg.isolation_radius if cfg.isolation_radius is not None else 4 * float(np.max(spacing))
    isolated = _smp_isolation(gamma, spacing, iso_r)
    if len(gamma):
        d = _boundary_distance(Omega)(gamma)
        delta = float(np.min(d))
        interior = {"certified": bool(delta > float(np.max(spacing))), "delta": delta,
                    "closest_point": gamma[int(np.argmin(d))]}
        if not interior["certified"]:
            interior["reason"] = "Gamma reaches within one grid spacing of the boundary"
    else:
        interior = {"certified": True, "delta": None, "reason": "Gamma is empty"}
    na = {"certified": False, "applicable": False, "reason": "operator mismatch"}
    lam = _smp_shells(gamma, f, Omega, op, cfg, spacing, False) if op.kind == eigenops.LAMBDA_K else na
    pm = _smp_shells(gamma, f, Omega, op, cfg, spacing, True) if op.kind == eigenops.PMINUS_K else na
    return SmpClassification(op.label, int(len(gamma)), gamma[:16].tolist(), isolated, interior, lam, pm,
                             dict(gstats, isolation_radius=iso_r))


def check_smp(f: ScalarField, Omega: RegionSpec, op: OperatorSpec,
              cfg: Optional[CheckConfig] = None, grid: Optional[GridSpec] = None) -> CheckReport:
    """Report wrapper: CertificateFound when any condition is certified."""
    cfg = cfg or CheckConfig()
    cls = classify_smp(f, Omega, op, cfg, grid)
    d = cls.to_dict()
    verdict = CERTIFICATE if cls.any_certified else CONSISTENT
    flags = {c: d[c].get("certified") for c in ("i", "ii", "iii", "iv")}
    return CheckReport("smp", verdict, cfg.seed, None, {"certified": flags, **d}, {})
